#!/usr/bin/env python3
"""Regenerates data/mini/annotations.tsv and prints the exact Fleiss' kappa
values for the fixture (computed here from the raw definition, independently
of the C++ implementation, so tests can pin them as references)."""

import fractions
import pathlib

F = fractions.Fraction


def sentence_ids():
    ids = [f"cp-{i:04d}" for i in range(1, 41)]
    for n in range(1, 16):
        ids += [f"int-{n:02d}-s", f"int-{n:02d}-n"]
    for n in range(1, 16):
        ids += [f"seq-{n:02d}-s", f"seq-{n:02d}-n"]
    return ids


def target_labels(sid):
    if sid.startswith("cp-"):
        num = int(sid.split("-")[1])
        return 1, (1 if num <= 25 else 0)
    num = int(sid.split("-")[1])
    if sid.endswith("-s"):
        return (1 if num <= 5 else 0), 1
    return 0, 0


def votes():
    rows = []
    for i, sid in enumerate(sentence_ids()):
        bias, stereo = target_labels(sid)
        for rater in ("a1", "a2", "a3"):
            b, s = bias, stereo
            if rater == "a2" and i % 7 == 3:
                b = 1 - b
            if rater == "a3" and i % 11 == 5:
                s = 1 - s
            rows.append((sid, rater, b, s))
    return rows


def fleiss(matrix):
    n_items = len(matrix)
    n_raters = sum(matrix[0])
    p_i = [
        F(sum(c * (c - 1) for c in row), n_raters * (n_raters - 1))
        for row in matrix
    ]
    p_bar = sum(p_i, F(0)) / n_items
    totals = [sum(row[j] for row in matrix) for j in range(len(matrix[0]))]
    grand = sum(totals)
    p_e = sum(F(t, grand) ** 2 for t in totals)
    return (p_bar - p_e) / (1 - p_e)


def main():
    rows = votes()
    out = pathlib.Path(__file__).resolve().parent.parent / "data/mini/annotations.tsv"
    names = {("bias", 0): "no_bias", ("bias", 1): "bias",
             ("stereo", 0): "no_stereotype", ("stereo", 1): "stereotype"}
    with open(out, "w") as f:
        f.write("sentence_id\tannotator_id\tbias_vote\tstereotype_vote\n")
        for sid, rater, b, s in rows:
            f.write(f"{sid}\t{rater}\t{names[('bias', b)]}\t{names[('stereo', s)]}\n")

    by_sentence = {}
    for sid, rater, b, s in rows:
        by_sentence.setdefault(sid, []).append((b, s))
    bias_matrix, stereo_matrix, joint_counts = [], [], [0, 0, 0, 0]
    for sid in sentence_ids():
        vs = by_sentence[sid]
        bias_matrix.append([sum(1 for b, _ in vs if b == 0),
                            sum(1 for b, _ in vs if b == 1)])
        stereo_matrix.append([sum(1 for _, s in vs if s == 0),
                              sum(1 for _, s in vs if s == 1)])
        maj_b = 1 if sum(b for b, _ in vs) >= 2 else 0
        maj_s = 1 if sum(s for _, s in vs) >= 2 else 0
        joint_counts[2 * maj_s + maj_b] += 1

    kb, ks = fleiss(bias_matrix), fleiss(stereo_matrix)
    print(f"kappa_bias       = {kb} = {float(kb):.17g}")
    print(f"kappa_stereotype = {ks} = {float(ks):.17g}")
    print(f"joint majority counts = {joint_counts}")


if __name__ == "__main__":
    main()
