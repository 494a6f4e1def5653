"""Independent counts for the Criteo fixture: vocabulary sizes (kept tokens
plus one UNK slot), collapsed tokens and their occurrences per field, and
the row counts of a ratio split."""
import gzip
import sys
from collections import Counter

path = sys.argv[1]
rows = [l.rstrip("\n").split("\t") for l in gzip.open(path, "rt")]
print("rows", len(rows))
for min_count in (1, 10):
    sizes, rare_tok, rare_occ = [], [], []
    for f in range(26):
        c = Counter(r[14 + f] for r in rows)
        kept = [t for t, n in c.items() if n >= min_count]
        rare = [n for t, n in c.items() if n < min_count]
        sizes.append(len(kept) + 1)
        rare_tok.append(len(rare))
        rare_occ.append(sum(rare))
    print("min_count", min_count)
    print("sizes", sizes)
    print("rare_tokens", rare_tok)
    print("rare_occurrences", rare_occ)
n = len(rows)
for tr, va in ((0.8, 0.1), (0.7, 0.2)):
    ntr = int(n * tr + 0.5)
    nva = min(int(n * va + 0.5), n - ntr)
    print("split", tr, va, (ntr, nva, n - ntr - nva))
