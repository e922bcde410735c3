"""Brute-force reference implementations used as test oracles."""

import math


def topk_brute(scores, labels, k):
    hits = 0
    for row, label in zip(scores.tolist(), labels.tolist()):
        ranked = sorted(range(len(row)), key=lambda c: (-row[c], c))
        hits += label in ranked[:k]
    return hits / len(labels)


def ap_brute(scores, relevant, k):
    positives = sum(1 for r in relevant if r)
    if positives == 0:
        return math.nan
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))[:k]
    found = 0
    total = 0.0
    for pos, i in enumerate(ranked, 1):
        if relevant[i]:
            found += 1
            total += found / pos
    return total / min(positives, k)


def weighted_map_brute(scores, multi_hot, weights, k):
    num = den = 0.0
    for c in range(scores.shape[1]):
        col = multi_hot[:, c].tolist()
        if not any(col):
            continue
        num += weights[c] * ap_brute(scores[:, c].tolist(), col, k)
        den += weights[c]
    return num / den
