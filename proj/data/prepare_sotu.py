#!/usr/bin/env python3
"""Build the desk-scale word-level corpus from U.S. State of the Union addresses.

The addresses are works of the U.S. federal government and are in the public
domain. Raw texts come from the @stdlib/datasets-sotu npm package
(`package/data/<year>_<name>_<party>.txt`).

Output follows Penn Treebank conventions: one sentence per line, lowercase,
punctuation removed, numbers replaced by N.

    python3 data/prepare_sotu.py /path/to/package/data data/sotu
"""
import pathlib
import re
import sys

MAX_CHARS = 1_000_000
SPLIT = (0.85, 0.075, 0.075)

SENTENCE_END = re.compile(r"(?<=[.!?;])\s+")
NUMBER = re.compile(r"^[\d.,/$%-]*\d[\d.,/$%-]*$")
WORD = re.compile(r"[a-z0-9][a-z0-9'.,$%/-]*")


def normalize(sentence):
    sentence = sentence.lower().replace("--", " ").replace("—", " ")
    out = []
    for tok in sentence.split():
        tok = tok.strip("\"()[]:;!?,.`“”‘’")
        if not tok:
            continue
        if NUMBER.match(tok):
            out.append("N")
        elif WORD.fullmatch(tok):
            out.extend(t for t in tok.replace("-", " ").split() if t)
    return " ".join(out)


def main():
    src, dst = pathlib.Path(sys.argv[1]), pathlib.Path(sys.argv[2])
    lines, total = [], 0
    for path in sorted(src.glob("*.txt")):
        text = path.read_text(encoding="utf-8").replace("\n", " ")
        for sentence in SENTENCE_END.split(text):
            line = normalize(sentence)
            if len(line.split()) < 3:
                continue
            if total + len(line) + 1 > MAX_CHARS:
                break
            lines.append(line)
            total += len(line) + 1
        if total + 200 > MAX_CHARS:
            break
    n_train = int(len(lines) * SPLIT[0])
    n_valid = int(len(lines) * SPLIT[1])
    dst.mkdir(parents=True, exist_ok=True)
    parts = {
        "train.txt": lines[:n_train],
        "valid.txt": lines[n_train:n_train + n_valid],
        "test.txt": lines[n_train + n_valid:],
    }
    for name, part in parts.items():
        (dst / name).write_text("".join(l + "\n" for l in part), encoding="utf-8")
        print(name, len(part), "lines", sum(len(l) + 1 for l in part), "chars")


if __name__ == "__main__":
    main()
