"""Reference token ids from the Hugging Face `tokenizers` byte-level BPE.

Reads one sentence per line on stdin, appends a fixed set of edge cases and
writes JSON lines {"text": ..., "ids": [...]} to the path given as argv[1].
The reference shares no code with the Rust crate.
"""

import json
import sys
from pathlib import Path

from tokenizers import Tokenizer, models, pre_tokenizers

DATA = Path(__file__).resolve().parent.parent / "crates" / "core" / "data" / "gpt2"

EXTRAS = [
    "",
    " ",
    "Hello world",
    "  leading and trailing spaces  ",
    "tabs\tand\nnewlines\n\n",
    "It's what we'd've done, isn't it? They'll say I'm right.",
    "Numbers 12345 and 3.14159 and 1,000,000.",
    "naïve café résumé, Zürich, São Paulo",
    "日本語のテキストと中文字符",
    "emoji 🙂🚀 and symbols ©®™ ≠ ≤ ∑",
    "URL https://example.com/path?q=1&r=2#frag",
    "MixedCASE words LIKE THIS and camelCaseIdentifiers",
    "punctuation!!! ... ??? ;;; --- ((()))",
    "   multiple     internal      spaces",
    "trailing newline\n",
    "a",
    "The old man the boat.",
    "The complex houses married and single soldiers and their families.",
    "Fat people eat accumulates.",
    "The cotton clothing is made of grows in Mississippi.",
]


def main() -> None:
    tok = Tokenizer(models.BPE.from_file(str(DATA / "vocab.json"), str(DATA / "merges.txt")))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False, use_regex=True)
    texts = [line.rstrip("\n") for line in sys.stdin if line.strip()]
    seen = set()
    with open(sys.argv[1], "w", encoding="utf-8") as out:
        for text in texts + EXTRAS:
            if text in seen:
                continue
            seen.add(text)
            ids = tok.encode(text).ids
            out.write(json.dumps({"text": text, "ids": ids}, ensure_ascii=False) + "\n")
    print(f"{len(seen)} sentences", file=sys.stderr)


if __name__ == "__main__":
    main()
