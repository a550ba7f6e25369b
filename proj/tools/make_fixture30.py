#!/usr/bin/env python3
"""Writes tests/data/fixture30.jsonl: 10 events x {left, center, right}."""
import json
import random
import sys

EVENTS = [
    ("budget", "economy", "Senate passes budget bill after late-night session"),
    ("tariffs", "economy", "New tariffs announced on steel imports"),
    ("wages", "economy", "Minimum wage increase heads to governor"),
    ("border", "immigration", "Border officials report record crossings"),
    ("asylum", "immigration", "Court blocks changes to asylum rules"),
    ("visas", "immigration", "Agency pauses work visa processing"),
    ("vaccine", "health", "Health officials expand vaccine eligibility"),
    ("insurance", "health", "Insurers raise premiums for next year"),
    ("clinics", "health", "State budget cuts funding for rural clinics"),
    ("pipeline", "energy", "Regulators approve contested pipeline"),
]

SHARED = ("officials said the plan would take effect next month after a vote in the chamber where lawmakers "
          "debated the measure for hours and several members offered amendments that failed").split()
LEFT = ("working families communities inequality corporations billionaires climate justice advocates "
        "vulnerable protections equity progressive activists union workers").split()
RIGHT = ("taxpayers freedom regulations bureaucrats liberty border security conservative patriots "
         "government overreach spending deficit tradition businesses").split()
CENTER = ("analysts estimated figures according report data percent agency spokesperson statement "
          "projected review survey").split()


def body(rng, side, title, length):
    pool = {"left": LEFT, "right": RIGHT, "center": CENTER}[side]
    words = title.lower().split()
    while len(words) < length:
        r = rng.random()
        words.append(rng.choice(pool) if r < 0.35 else rng.choice(SHARED))
        if rng.random() < 0.08:
            words[-1] += "."
    text = " ".join(words)
    return text[0].upper() + text[1:] + "."


def main(out):
    rng = random.Random(20240601)
    lengths = {"left": (110, 160), "center": (90, 140), "right": (70, 120)}
    with open(out, "w") as f:
        for event, topic, title in EVENTS:
            for side in ("left", "center", "right"):
                rec = {
                    "id": f"{event}-{side[0]}",
                    "title": title,
                    "body": body(rng, side, title, rng.randint(*lengths[side])),
                    "label": side,
                    "event_id": event,
                    "topic": topic,
                    "source": f"{side}-wire",
                }
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data/fixture30.jsonl")
