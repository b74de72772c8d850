"""Regenerate the frozen test fixtures.

Training records come from mining a generated corpus with the namecloze
pipeline, so they are real canonical-format records.  The loss table is
computed with the namecloze loss operation; the agreement test asserts
the torch implementation matches it row by row.

    python tools/make_fixtures.py
"""
import json
import random
from pathlib import Path

from namecloze import mining, textio
from namecloze.names import GazetteerDetector, detect_names
from namecloze.scorer import LossParams, loss

HERE = Path(__file__).parent
DATA = HERE.parent / "tests" / "data"

NAMES = ["Alice", "Bob", "Carol", "David", "Erin", "Frank", "Gina", "Henry",
         "Irene", "Jack", "Karen", "Leo", "Mary", "Nora", "Oscar", "Paula"]
VERBS = ["met", "called", "thanked", "praised", "greeted", "warned", "helped"]
PLACES = ["at the station", "near the park", "after the meeting",
          "during the trip", "by the river", "at the office"]


def synthetic_corpus(rng: random.Random, n_docs: int) -> list[textio.Document]:
    docs = []
    for i in range(n_docs):
        a, b, c = rng.sample(NAMES, 3)
        verb, verb2 = rng.sample(VERBS, 2)
        place = rng.choice(PLACES)
        shape = i % 3
        if shape == 0:
            text = f"{a} {verb} {b} {place} because {a} was early."
        elif shape == 1:
            text = f"{a} {verb} {b} {place}. Later {a} {verb2} {c} again."
        else:
            text = f"{b} and {a} walked home. Then {b} {verb} everyone {place}."
        docs.append(textio.Document(f"synthetic-{i:03d}", text, "plain-text"))
    return docs


def mine(docs) -> list[mining.MaskedExample]:
    detector = GazetteerDetector()
    out = []
    for doc in docs:
        pairs = []
        for passage in textio.windows(doc):
            pairs.append((passage, detect_names(passage, detector)))
        out.extend(mining.mine_document_passages(pairs))
    return out


def main() -> None:
    rng = random.Random(20240820)
    examples = mine(synthetic_corpus(rng, 150))
    train, val = mining.holdout_split(examples, 24, seed=3)
    assert len(train) >= 100, len(train)
    mining.write_records(DATA / "train_records.jsonl", train)
    mining.write_records(DATA / "val_records.jsonl", val)

    rows = []
    for _ in range(50):
        logp_a = rng.uniform(-12.0, -0.01)
        logp_b = rng.uniform(-12.0, -0.01)
        alpha = rng.choice([0.0, 5.0, 10.0, 20.0])
        beta = rng.choice([0.0, 0.1, 0.2, 0.4])
        rows.append({
            "logp_a": logp_a,
            "logp_b": logp_b,
            "alpha": alpha,
            "beta": beta,
            "loss": loss(logp_a, logp_b, LossParams(alpha, beta)),
        })
    with open(DATA / "loss_table.jsonl", "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row) + "\n")
    print(f"train={len(train)} val={len(val)} loss_rows={len(rows)}")


if __name__ == "__main__":
    main()
