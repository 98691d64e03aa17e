"""Character vocabulary shared by transcripts, hypotheses, and metadata.

Token id 0 is the space character (word separator); ids 1..K-1 are
letters. Out-of-vocabulary characters map to the unknown id (= space,
which never changes word identity on split).
"""

import string

SPACE_ID = 0


class Vocab:
    def __init__(self, size=9):
        if size < 2:
            raise ValueError("vocab size must be >= 2")
        letters = string.ascii_lowercase
        if size - 1 > len(letters):
            raise ValueError("vocab size too large for character alphabet")
        self.chars = " " + letters[: size - 1]
        self.index = {c: i for i, c in enumerate(self.chars)}

    @property
    def size(self):
        return len(self.chars)

    def encode(self, text):
        return [self.index.get(c, SPACE_ID) for c in text]

    def decode(self, tokens):
        return "".join(self.chars[t] for t in tokens)

    def words(self, tokens):
        return self.decode(tokens).split()
