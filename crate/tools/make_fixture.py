"""Writes the 10k-row Criteo-format fixture used by the pipeline tests."""
import gzip
import random
import sys

ROWS = 10_000
OUT = sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures/criteo_10k.tsv.gz"

rng = random.Random(20200)
# Per-field cardinality and Zipf-like skew, so that some tokens fall under
# the frequency thresholds and some fields stay small.
cards = [3, 8, 30, 60, 120, 250, 500, 1000, 2000, 4000, 7, 15, 40,
         90, 200, 400, 800, 1600, 3200, 6400, 5, 12, 25, 50, 100, 9000]
missing = [0.0, 0.01, 0.05, 0.2, 0.0, 0.4, 0.0, 0.1, 0.0, 0.3, 0.02, 0.0, 0.0,
           0.0, 0.15, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.7, 0.0, 0.0, 0.05]


def token(field, card):
    k = int(card * rng.random() ** 2.5)
    return "%08x" % ((field * 2654435761 + k * 40503) & 0xFFFFFFFF)


lines = []
for _ in range(ROWS):
    label = "1" if rng.random() < 0.25 else "0"
    ints = []
    for i in range(13):
        r = rng.random()
        if r < 0.1:
            ints.append("")
        elif r < 0.15:
            ints.append(str(-rng.randint(1, 3)))
        else:
            ints.append(str(int(rng.expovariate(1 / (3 + 20 * i)))))
    cats = []
    for f, card in enumerate(cards):
        cats.append("" if rng.random() < missing[f] else token(f, card))
    lines.append("\t".join([label] + ints + cats))

data = ("\n".join(lines) + "\n").encode()
with open(OUT, "wb") as fh:
    with gzip.GzipFile(filename="", mode="wb", fileobj=fh, mtime=0) as gz:
        gz.write(data)
