"""Tokenizer and closed vocabulary."""
from __future__ import annotations

import re

_TOKEN = re.compile(r"[a-z0-9]+(?:\.[0-9]+)?|[^\sa-z0-9]")

PAD, UNK, SEP = "<pad>", "<unk>", "<sep>"


def tokenize(text):
    """Lowercase, then split on whitespace and punctuation (punctuation kept as tokens)."""
    return _TOKEN.findall(text.lower())


class Vocab:
    def __init__(self, words=()):
        self.itos = [PAD, UNK, SEP]
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        for w in words:
            self.add(w)

    def add(self, word):
        if word not in self.stoi:
            self.stoi[word] = len(self.itos)
            self.itos.append(word)
        return self.stoi[word]

    def add_text(self, text):
        for tok in tokenize(text):
            self.add(tok)

    def __len__(self):
        return len(self.itos)

    @property
    def unk_id(self):
        return 1

    @property
    def sep_id(self):
        return 2

    def encode(self, text):
        return [self.stoi.get(tok, 1) for tok in tokenize(text)]

    def decode(self, ids):
        return " ".join(self.itos[i] for i in ids)

    @classmethod
    def from_texts(cls, texts):
        v = cls()
        for t in texts:
            v.add_text(t)
        return v
