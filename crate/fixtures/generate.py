"""Regenerates the synthetic fixtures in this directory.

The fixtures mimic the shape of a 26-item thermal-concepts instrument with a
34-entry misconception library. Item texts and descriptions are invented
placeholders; none of them come from a published instrument.

    python3 fixtures/generate.py
"""

import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
rng = random.Random(20240611)

LIBRARY = [
    ("A1", "Heat and temperature are the same quantity."),
    ("A2", "Heat is a substance that flows like a fluid."),
    ("A3", "Cold is a separate quantity that flows into warm objects."),
    ("A4", "Temperature is a property of the material rather than of its state."),
    ("A5", "Bigger objects always have a higher temperature."),
    ("A6", "Temperature of a mixture is the sum of the parts."),
    ("A7", "Heat only travels upwards."),
    ("A8", "Objects that feel cold are at a lower temperature."),
    ("A9", "Temperature depends on the amount of substance."),
    ("B1", "Boiling point rises the longer a liquid is heated."),
    ("B2", "Bubbles in boiling water contain air or oxygen."),
    ("B3", "Water cannot be hotter than its boiling point under any pressure."),
    ("B4", "Melting ice must be below zero degrees."),
    ("B5", "Phase change happens at changing temperature."),
    ("B6", "Steam is hotter than boiling water at the same pressure."),
    ("B7", "Evaporation only happens at the boiling point."),
    ("B8", "Condensation is water leaking through a container."),
    ("B9", "Ice at any temperature is the same."),
    ("C1", "Metals are naturally colder than wood."),
    ("C2", "Insulators create warmth on their own."),
    ("C3", "Conductors hold heat in rather than transfer it."),
    ("C4", "Wrapping a cold object keeps it from warming because wool is warm."),
    ("C5", "Objects in the same room are at different temperatures."),
    ("C6", "Good conductors feel cold because they contain cold."),
    ("C7", "Thermal equilibrium means the heat inside is equal."),
    ("C8", "Radiation only comes from glowing objects."),
    ("D1", "Energy is used up when an object cools."),
    ("D2", "Heating always raises the temperature."),
    ("D3", "Heat capacity and temperature change are unrelated."),
    ("D4", "A thermometer measures the heat content of a body."),
    ("D5", "Hot objects contain more heat regardless of mass."),
    ("D6", "Cooling means adding coldness."),
    ("D7", "Temperature change is independent of the material."),
    ("D8", "Energy transfer stops once temperatures are equal and never restarts."),
]
assert len(LIBRARY) == 34

CONTEXTS = [
    "a cup of tea left on a kitchen bench",
    "ice cubes taken out of a freezer",
    "a saucepan of water on a stove",
    "a metal spoon and a wooden spoon in the same drawer",
    "a woollen jumper on a cold morning",
    "a soft drink can taken from the fridge",
    "soup being reheated in a pot",
    "two glasses of water poured together",
    "a kettle that has just switched off",
    "water boiling on a mountain top",
    "a bottle of water wrapped in a wet cloth",
    "a sealed bag of chips in a warm car",
    "a block of butter beside a window",
    "a thermometer placed in a bath",
    "a steel bench and a plastic chair in the sun",
    "a lake covered with a thin layer of ice",
    "steam rising from a pressure cooker",
    "a cold window on a humid day",
    "a pie taken out of an oven",
    "an insulated lunch box",
    "a hot water bottle in a bed",
    "a bucket of snow brought indoors",
    "a copper pan and a glass dish heated equally",
    "a room heater running overnight",
    "hands warmed around a mug",
    "a sealed flask of cocoa",
]
assert len(CONTEXTS) == 26

OPTION_IDS = ["a", "b", "c", "d", "e"]
OPTION_TEMPLATES = [
    "The temperature stays the same as before.",
    "The temperature rises until something else changes.",
    "The object loses its heat to the surroundings.",
    "Coldness moves into the object from outside.",
    "The amount of material decides the final temperature.",
    "Both objects end at the temperature of the room.",
    "The energy is used up and disappears.",
    "Nothing happens because the material is an insulator.",
]


def write_library():
    data = [{"id": i, "description": d} for i, d in LIBRARY]
    (HERE / "library.json").write_text(json.dumps(data, indent=2) + "\n")


def make_items():
    items = []
    for idx, ctx in enumerate(CONTEXTS):
        item_id = f"q{idx + 1:02d}"
        correct = rng.randrange(5)
        texts = rng.sample(OPTION_TEMPLATES, 5)
        options = [
            {"option_id": oid, "text": texts[k], "is_correct": k == correct}
            for k, oid in enumerate(OPTION_IDS)
        ]
        items.append(
            {
                "item_id": item_id,
                "stem": f"Consider {ctx}. Which statement best describes what happens next?",
                "options": options,
            }
        )
    (HERE / "items.json").write_text(json.dumps(items, indent=2) + "\n")
    return items


def make_expert(items):
    # Six core misconceptions each probed by a pair of single-misconception
    # items; the other fourteen items combine one core misconception with
    # three or four others. 12 + 14 + 50 = 76 ones, every column used.
    attrs = [a for a, _ in LIBRARY]
    order = attrs[:]
    rng.shuffle(order)
    core, others = order[:6], order[6:]
    rows = []
    for c in core:
        rows += [{c}, {c}]
    extra = [4] * 8 + [3] * 6
    pool = others + rng.sample(others, 50 - len(others))
    rng.shuffle(pool)
    for t, n in enumerate(extra):
        row = {core[t % 6]}
        while len(row) < n + 1:
            cand = pool.pop() if pool else rng.choice(others)
            if cand in row:
                pool.insert(0, cand)
                rng.shuffle(pool)
                continue
            row.add(cand)
        rows.append(row)
    rng.shuffle(rows)
    total = sum(len(r) for r in rows)
    assert total == 76, total
    assert len(set().union(*rows)) == 34
    with open(HERE / "expert_q.csv", "w", newline="") as fh:
        fh.write("item," + ",".join(attrs) + "\n")
        for item, row in zip(items, rows):
            fh.write(item["item_id"] + "," + ",".join("1" if a in row else "0" for a in attrs) + "\n")
    return rows


def make_annotations(items, rows):
    attrs = [a for a, _ in LIBRARY]
    ones = [(i, a) for i, r in enumerate(rows) for a in sorted(r)]
    zeros = [(i, a) for i in range(len(items)) for a in attrs if a not in rows[i]]
    rng.shuffle(ones)
    rng.shuffle(zeros)
    # cumulative counts matching the GPT-5 rows of the comparison table:
    # High 41/52, +Medium 15/74, +Low 5/62
    tiers = {}
    for cell in ones[:41]:
        tiers[cell] = "High"
    for cell in ones[41:56]:
        tiers[cell] = "Medium"
    for cell in ones[56:61]:
        tiers[cell] = "Low"
    for cell in zeros[:52]:
        tiers[cell] = "High"
    for cell in zeros[52:126]:
        tiers[cell] = "Medium"
    for cell in zeros[126:188]:
        tiers[cell] = "Low"

    lower = {"High": ["Medium", "Low"], "Medium": ["Low"], "Low": []}
    per_option = {(i, o): [] for i in range(len(items)) for o in OPTION_IDS}
    for (i, a), tier in sorted(tiers.items()):
        distractors = [o["option_id"] for o in items[i]["options"] if not o["is_correct"]]
        opt = rng.choice(distractors)
        per_option[(i, opt)].append(
            {"misconception_id": a, "confidence": tier, "rationale": f"Distractor {opt} reflects {a}."}
        )
        # occasional weaker duplicate on another distractor; never changes the max tier
        if lower[tier] and rng.random() < 0.2:
            other = rng.choice(distractors)
            per_option[(i, other)].append(
                {
                    "misconception_id": a,
                    "confidence": rng.choice(lower[tier]),
                    "rationale": f"Weaker link between {other} and {a}.",
                }
            )

    out_items = []
    for i, item in enumerate(items):
        opts = []
        for o in OPTION_IDS:
            labels = per_option[(i, o)]
            rng.shuffle(labels)
            opts.append({"option_id": o, "labels": labels})
        out_items.append({"item_id": item["item_id"], "options": opts})
    doc = {
        "provenance": {
            "model_name": "fixture-model",
            "prompt_version": "V3",
            "endpoint_label": "fixture",
            "temperature": 0.0,
            "timestamp": "2025-01-01T00:00:00Z",
        },
        "items": out_items,
        "failures": [],
    }
    (HERE / "annotations.json").write_text(json.dumps(doc, indent=2) + "\n")


def make_exemplars(items, rows):
    out = []
    for i in range(5):
        item = items[i]
        distractors = [o["option_id"] for o in item["options"] if not o["is_correct"]]
        labels = []
        for k, a in enumerate(sorted(rows[i])):
            labels.append(
                {
                    "option_id": distractors[k % len(distractors)],
                    "misconception_id": a,
                    "confidence": "High",
                }
            )
        out.append(
            {
                "item": item,
                "labels": labels,
                "reasoning": "Each labelled distractor is only attractive to a student who holds the "
                "named belief; options that merely share vocabulary with the stem are left unlabelled.",
            }
        )
    (HERE / "exemplars.json").write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    write_library()
    items = make_items()
    rows = make_expert(items)
    make_annotations(items, rows)
    make_exemplars(items, rows)
