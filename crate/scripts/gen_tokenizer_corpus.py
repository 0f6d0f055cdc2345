"""Regenerate the tokenizer reference corpus.

Runs the reference GPT-2 BPE implementation (transformers' slow GPT2Tokenizer,
a port of the original encoder.py) over a seeded corpus and writes one JSON
object per line: {"text": ..., "ids": [...]}.

    python3 scripts/gen_tokenizer_corpus.py
"""

import json
import random
import string
from pathlib import Path

from transformers import GPT2Tokenizer

ROOT = Path(__file__).resolve().parent.parent
FIX = ROOT / "crates" / "core" / "tests" / "fixtures"

tok = GPT2Tokenizer(
    str(FIX / "gpt2" / "vocab.json"), str(FIX / "gpt2" / "merges.txt"), split_special_tokens=True
)
rng = random.Random(20240917)

banks = json.loads((ROOT / "crates" / "core" / "data" / "banks_v1.json").read_text())

fixed = [
    "",
    " ",
    "A",
    " A",
    "Answer:",
    "Question: Afterwards Lisa and Rachel went to the garden, and Lisa gave a bone to"
    " Answer Choices: A: Lisa B: Rachel Answer:",
    "Question: The war lasted from the year 1732 to the year 17 Answer Choices: A: 29 B: 45 C: 12 D: 07 Answer:",
    "Question: cgryp rkodmajc ajwsqby? Answer Choices: A: samdaheepw ltvlpeh B: rqqtxdgiyb C: bkdjziiy Answer:",
    "I'm sure they'll say it's fine, we've done what we'd planned.",
    "HELLO'S WORLD'LL",
    "tabs\tand\nnewlines\r\n  mixed   spaces   ",
    "trailing space ",
    "   leading spaces",
    "multiple\n\n\nnewlines",
    "numbers 1234567890 3.14159 -42 1e10",
    "naïve café résumé",
    "中文字符测试",
    "日本語のテキスト",
    "emoji 😀🎉👍🏽 test",
    "Ελληνικά κείμενο",
    "Русский текст",
    "!!!???...,,,;;;",
    "a non-breaking space",
    "zero​width",
    "<|endoftext|>",
    "http://example.com/path?query=1&x=y",
    "def f(x):\n    return x**2\n",
    "    indented\n        more",
]

pieces = (
    list(string.ascii_letters)
    + list(string.digits)
    + list(string.punctuation)
    + [" ", "  ", "\n", "\t", "'s", "'re", "'ve", "'ll", "'d", "'m", "'t"]
    + ["é", "ü", "ß", "中", "字", "😀", "—", "…", " ", "€"]
)


def random_ascii_word():
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(1, 12)))


def mcq_prompt():
    q = " ".join(random_ascii_word() for _ in range(rng.randint(3, 12)))
    n = rng.randint(2, 5)
    choices = " ".join(
        f"{'ABCDE'[i]}: " + " ".join(random_ascii_word() for _ in range(rng.randint(1, 4)))
        for i in range(n)
    )
    return f"Question: {q}? Answer Choices: {choices} Answer:"


def ioi_prompt():
    t = rng.choice(banks["ioi_templates"])
    s, io = rng.sample(banks["names"], 2)
    body = (
        t.replace("{S}", s)
        .replace("{IO}", io)
        .replace("{PLACE}", rng.choice(banks["places"]))
        .replace("{OBJECT}", rng.choice(banks["objects"]))
    )
    return f"Question: {body} Answer Choices: A: {s} B: {io} Answer:"


def soup():
    return "".join(rng.choice(pieces) for _ in range(rng.randint(1, 40)))


corpus = list(fixed)
while len(corpus) < 1000:
    kind = rng.random()
    if kind < 0.25:
        corpus.append(mcq_prompt())
    elif kind < 0.45:
        corpus.append(ioi_prompt())
    else:
        corpus.append(soup())

with open(FIX / "tokenizer_corpus.jsonl", "w", encoding="utf-8") as f:
    for text in corpus:
        ids = tok.encode(text)
        assert tok.decode(ids) == text
        f.write(json.dumps({"text": text, "ids": ids}, ensure_ascii=False) + "\n")
print("wrote", len(corpus))
