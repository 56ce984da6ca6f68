"""Writes the bundled fixture corpus used by the end-to-end tests.

Stories are synthetic but shaped like the real inputs: several thousand words,
a cast of a dozen or more named characters introduced by full name and later
referred to by surname, first name or title plus surname, and per-writer
sentiment skew. The sample story fixture is appended as-is.

Usage: python3 scripts/make_fixture_corpus.py
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "crates/core/data"
OUT = ROOT / "crates/core/tests/fixtures/corpus.jsonl"
SAMPLE = ROOT / "crates/core/tests/fixtures/sample_story.txt"

SEED = 7_2024
WRITERS = {
    # writer: (probability of a positive unit, stories)
    "human": (0.45, 4),
    "llm-a": (0.80, 4),
    "llm-b": (0.72, 4),
    "llm-c": (0.66, 3),
    "llm-d": (0.58, 3),
}
SURNAMES = [
    "Rayne", "Thrace", "Okafor", "Lindqvist", "Marlowe", "Castellan", "Ibarra",
    "Voss", "Kessler", "Adeyemi", "Harrow", "Quill", "Salazar", "Whitlock",
    "Brand", "Moreau", "Takeda", "Oduya", "Fenwick", "Sorensen", "Halloran",
    "Baptiste", "Kowalski", "Strand", "Everly", "Nakamura", "Drummond", "Achebe",
]
TITLES = ["Dr.", "Captain", "Prof.", "Sgt."]

POS_ACTS = [
    "{a} thanked {b} warmly for the help",
    "{a} smiled at {b} and praised the careful work",
    "{a} embraced {b} with real joy",
    "{a} encouraged {b} and offered quiet support",
    "{a} laughed with {b} over a shared cup of tea",
    "{a} comforted {b} after the long shift",
    "{a} trusted {b} and felt grateful for the help",
    "{a} helped {b} repair the damaged console",
]
NEG_ACTS = [
    "{a} shouted at {b} in anger",
    "{a} blamed {b} for the terrible mistake",
    "{a} sneered at {b} and mocked the plan",
    "{a} threatened {b} with a cold stare",
    "{a} called {b} a traitor",
    "{a} scowled at {b} with open suspicion",
    "{a} fought with {b} over the last supplies",
    "{a} lied to {b} about the missing codes",
]
NEUTRAL_ACTS = [
    "{a} walked with {b} down the narrow corridor",
    "{a} studied the charts while {b} checked the readings",
    "{a} handed {b} the report from the lower deck",
    "{a} waited beside {b} near the observation window",
]
FILLER = [
    "The corridor hummed with the steady sound of distant machines.",
    "The lights flickered once and then settled into a pale glow.",
    "The stars drifted past the window in slow silence.",
    "It was late, and the station had grown quiet for the night.",
    "The air smelled of metal, dust and old coffee.",
    "No one spoke for a while as the engines turned over below.",
    "Then the alarm fell silent and the room seemed larger than before.",
    "There was still work to do before the next transmission arrived.",
    "The map on the wall showed three routes through the outer belt.",
    "In the morning the crew would have to decide which way to go.",
]
EXTRA = [
    " before the meeting ended",
    " while the others watched",
    " as the ship turned toward the outer ring",
    " in the crowded mess hall",
    " under the flickering lights of the lab",
    "",
]


def read_names(name):
    out = []
    for line in (DATA / name).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line.split(",")[0])
    return out


def make_cast(rng, size, male, female):
    firsts = rng.sample(male, size // 2) + rng.sample(female, size - size // 2)
    rng.shuffle(firsts)
    lasts = rng.sample(SURNAMES, size)
    cast = []
    for first, last in zip(firsts, lasts):
        title = rng.choice(TITLES) if rng.random() < 0.25 else None
        cast.append({"first": first, "last": last, "title": title, "introduced": False})
    return cast


def refer(rng, c):
    if not c["introduced"]:
        c["introduced"] = True
        full = f"{c['first']} {c['last']}"
        return f"{c['title']} {full}" if c["title"] else full
    r = rng.random()
    if c["title"] and r < 0.4:
        return f"{c['title']} {c['last']}"
    if r < 0.65:
        return c["first"]
    if r < 0.85:
        return c["last"]
    return f"{c['first']} {c['last']}"


def pick_pair(rng, cast):
    weights = [1.0 / (1 + 0.35 * i) for i in range(len(cast))]
    a = rng.choices(range(len(cast)), weights)[0]
    b = a
    while b == a:
        b = rng.choices(range(len(cast)), weights)[0]
    return cast[a], cast[b]


def story(rng, p_pos, target_words, male, female):
    cast = make_cast(rng, rng.randint(12, 16), male, female)
    # introduce everyone early so first mentions carry the full name
    sentences = []
    for i in range(0, len(cast) - 1, 2):
        a, b = cast[i], cast[i + 1]
        sentences.append(rng.choice(NEUTRAL_ACTS).format(a=refer(rng, a), b=refer(rng, b)) + ".")
        sentences.append(rng.choice(FILLER))
        sentences.append(rng.choice(FILLER))
    if not cast[-1]["introduced"]:
        sentences.append(
            rng.choice(NEUTRAL_ACTS).format(a=refer(rng, cast[-1]), b=refer(rng, cast[0])) + "."
        )
        sentences.append(rng.choice(FILLER))
        sentences.append(rng.choice(FILLER))
    words = sum(len(s.split()) for s in sentences)
    while words < target_words or len(sentences) % 3:
        a, b = pick_pair(rng, cast)
        r = rng.random()
        pool = POS_ACTS if r < p_pos else (NEG_ACTS if r < 0.93 else NEUTRAL_ACTS)
        s = rng.choice(pool).format(a=refer(rng, a), b=refer(rng, b)) + rng.choice(EXTRA) + "."
        block = [s, rng.choice(FILLER), rng.choice(FILLER)]
        if rng.random() < 0.3:
            c, d = pick_pair(rng, cast)
            block[1] = rng.choice(NEUTRAL_ACTS).format(a=refer(rng, c), b=refer(rng, d)) + "."
        sentences.extend(block)
        words += sum(len(x.split()) for x in block)
    paragraphs = [" ".join(sentences[i : i + 9]) for i in range(0, len(sentences), 9)]
    return "\n\n".join(paragraphs)


def main():
    rng = random.Random(SEED)
    male = [n for n in read_names("male_names.txt")]
    female = [n for n in read_names("female_names.txt")]
    both = set(male) & set(female)
    male = [n for n in male if n not in both]
    female = [n for n in female if n not in both]
    records = []
    for writer, (p_pos, count) in WRITERS.items():
        for i in range(count):
            text = story(rng, p_pos, rng.randint(3300, 4200), male, female)
            records.append({"story_id": f"{writer}-{i + 1:02d}", "writer": writer, "text": text})
    # too short for the word-count filter
    records.append(
        {
            "story_id": "human-short",
            "writer": "human",
            "text": story(rng, 0.5, 400, male, female),
        }
    )
    records.append({"story_id": "sample-story", "writer": "llm-a", "text": SAMPLE.read_text().strip()})
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")
    print(f"wrote {len(records)} records to {OUT}")


if __name__ == "__main__":
    main()
