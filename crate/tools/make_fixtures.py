#!/usr/bin/env python3
"""Regenerates the bundled fixtures under fixtures/.

Outputs:
  spamlike_train.tsv / spamlike_test.tsv / spamlike_small.tsv
      Synthetic two-class "spam vs ham" text datasets (label<TAB>text).
  embeddings_10d.txt
      10-dimensional embeddings for the fixture vocabulary, including the
      most frequent adjacent-pair join tokens so --bigram is meaningful.
  stopwords.txt
      A short filler-word list.
  mi_correlated.bin
      A prepared-dataset binary (magic TMPP): 2000 centered Gaussian
      sequences of 8 elements x 4 dims whose positions share a common
      signal with alternating sign and correlation magnitude 0.9, so mean
      pooling cancels most of the variance.

Also prints the reference value of the tmpca-vs-mean log-determinant
difference on mi_correlated.bin, computed here with numpy as an
implementation-independent oracle. The acceptance suite pins that value.
"""

import collections
import random
import struct
import zlib
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

SPAM_WORDS = [
    "win", "free", "cash", "prize", "claim", "urgent", "offer", "click",
    "winner", "txt", "mobile", "award", "guaranteed", "bonus", "credit",
]
HAM_WORDS = [
    "meeting", "lunch", "tomorrow", "home", "love", "dinner", "call",
    "later", "thanks", "sorry", "work", "time", "good", "night", "see",
]
SHARED_WORDS = ["the", "a", "to", "you", "i", "is", "in", "and", "of", "my"]

STOPWORDS = ["the", "a", "to", "is", "in"]


def make_sample(rng, label):
    primary = SPAM_WORDS if label == 1 else HAM_WORDS
    secondary = HAM_WORDS if label == 1 else SPAM_WORDS
    length = rng.randint(6, 14)
    tokens = []
    for _ in range(length):
        roll = rng.random()
        if roll < 0.55:
            tokens.append(rng.choice(primary))
        elif roll < 0.70:
            tokens.append(rng.choice(secondary))
        else:
            tokens.append(rng.choice(SHARED_WORDS))
    # Light decoration the tokenizer strips: capitalization and punctuation.
    if rng.random() < 0.5:
        tokens[0] = tokens[0].capitalize()
    if rng.random() < 0.4:
        tokens[-1] += "." if label == 0 else "!"
    if label == 1 and rng.random() < 0.3:
        k = rng.randrange(len(tokens))
        tokens[k] = tokens[k].upper()
    return " ".join(tokens)


def write_text_dataset(path, rng, count, spam_fraction):
    lines = []
    spam_count = int(round(count * spam_fraction))
    labels = [1] * spam_count + [0] * (count - spam_count)
    rng.shuffle(labels)
    for label in labels:
        lines.append(f"{label}\t{make_sample(rng, label)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return lines


def count_bigrams(lines):
    counts = collections.Counter()
    for line in lines:
        _, text = line.split("\t", 1)
        tokens = [t.strip(".!").lower() for t in text.split()]
        for a, b in zip(tokens, tokens[1:]):
            counts[f"{a}_{b}"] += 1
    return counts


def write_embeddings(path, tokens, dim, seed):
    # Mimic task-trained embeddings: class-marked words share a component
    # along one direction, the way supervised training separates them.
    gen = np.random.default_rng(seed)
    axis = gen.normal(0.0, 1.0, dim)
    axis /= np.linalg.norm(axis)

    def offset(word):
        if word in SPAM_WORDS:
            return 0.5
        if word in HAM_WORDS:
            return -0.5
        return 0.0

    lines = [str(dim)]
    for token in tokens:
        parts = token.split("_")
        shift = sum(offset(p) for p in parts) / len(parts)
        vec = gen.normal(0.0, 0.4, dim) + shift * axis
        lines.append(token + " " + " ".join(repr(float(v)) for v in vec))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_prepared(path, data, mean, labels, class_count):
    m, nd = data.shape
    n, d = 8, 4
    assert nd == n * d
    buf = bytearray()
    buf += b"TMPP"
    buf += struct.pack("<I", 1)
    buf += struct.pack("<IIII", m, n, d, class_count)
    buf += struct.pack(f"<{nd}d", *mean)
    buf += struct.pack(f"<{m}I", *labels)
    for row in data:
        buf += struct.pack(f"<{nd}d", *row)
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    path.write_bytes(bytes(buf))


def make_mi_fixture(path, m=2000, n=8, d=4, rho=0.9, seed=13):
    gen = np.random.default_rng(seed)
    signal, noise = np.sqrt(rho), np.sqrt(1.0 - rho)
    raw = np.empty((m, n * d))
    for i in range(m):
        base = gen.normal(0.0, 1.0, d)
        for j in range(n):
            sign = 1.0 if j % 2 == 0 else -1.0
            raw[i, j * d : (j + 1) * d] = sign * signal * base + noise * gen.normal(0.0, 1.0, d)
    mean = raw.mean(axis=0)
    centered = raw - mean
    write_prepared(path, centered, mean, [0] * m, 1)
    return centered


def tmpca_vs_mean_logdet_diff(centered, n=8, d=4):
    """Numpy reference for the pinned constant: fit the fan-in-2 tree, then
    compare output log-determinants against corrected mean pooling."""
    m = centered.shape[0]
    current = centered.copy()
    length = n
    while length > 1:
        rows = current.reshape(m * length // 2, 2 * d)
        cov = rows.T @ rows / (rows.shape[0] - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        kernel = eigvecs[:, ::-1][:, :d].T  # top-d eigenvectors as rows
        current = (rows @ kernel.T).reshape(m, length // 2 * d)
        length //= 2
    v_tmpca = np.cov(current.T, ddof=1)
    mean_pooled = centered.reshape(m, n, d).mean(axis=1)
    v_mean = np.cov(mean_pooled.T, ddof=1)
    ld_t = np.linalg.slogdet(v_tmpca)[1]
    ld_m = np.linalg.slogdet(v_mean)[1]
    return ld_t - (ld_m + d * np.log(n))


def main():
    FIXTURES.mkdir(exist_ok=True)
    rng = random.Random(7)

    train = write_text_dataset(FIXTURES / "spamlike_train.tsv", rng, 1000, 0.45)
    write_text_dataset(FIXTURES / "spamlike_test.tsv", rng, 250, 0.45)
    (FIXTURES / "spamlike_small.tsv").write_text(
        "\n".join(train[:200]) + "\n", encoding="utf-8"
    )
    (FIXTURES / "stopwords.txt").write_text("\n".join(STOPWORDS) + "\n", encoding="utf-8")

    vocab = SPAM_WORDS + HAM_WORDS + SHARED_WORDS
    top_bigrams = [t for t, _ in count_bigrams(train).most_common(40)]
    write_embeddings(FIXTURES / "embeddings_10d.txt", vocab + top_bigrams, 10, 11)

    centered = make_mi_fixture(FIXTURES / "mi_correlated.bin")
    diff = tmpca_vs_mean_logdet_diff(centered)
    print(f"tmpca-vs-mean logdet difference on mi_correlated.bin: {float(diff)!r}")

    test_labels = [
        int(line.split("\t", 1)[0])
        for line in (FIXTURES / "spamlike_test.tsv").read_text().splitlines()
    ]
    majority = max(test_labels.count(0), test_labels.count(1)) / len(test_labels)
    print(f"test-set majority baseline: {majority}")


if __name__ == "__main__":
    main()
