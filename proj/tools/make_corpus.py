#!/usr/bin/env python3
"""Write a deterministic English-like byte corpus for the toy model.

Sentences come from a small phrase grammar driven by a seeded RNG, so the
file is reproducible byte for byte: python3 tools/make_corpus.py --bytes 100000
"""
import argparse
import random

SUBJECTS = [
    "the old man", "the young woman", "a small boy", "the captain", "my brother", "the farmer",
    "the lady of the house", "a stranger", "the doctor", "her sister", "the king", "the miller",
    "the fisherman", "a tired traveller", "the schoolmaster", "his mother", "the widow", "the sailor",
]
VERBS = [
    "walked", "looked", "waited", "spoke", "listened", "turned", "smiled", "hurried", "paused",
    "wrote", "sang", "laughed", "sighed", "returned", "stood", "sat", "wandered", "called",
]
PLACES = [
    "by the river", "across the field", "into the garden", "near the church", "along the road",
    "under the old oak", "at the window", "beside the fire", "on the hill", "in the village",
    "down to the harbour", "through the forest", "over the bridge", "past the mill",
]
TIMES = [
    "in the morning", "before supper", "after the rain", "at dawn", "late in the evening",
    "on sunday", "when the bells rang", "as the sun went down", "in the winter", "at noon",
]
OBJECTS = [
    "a letter", "the book", "some bread", "a lantern", "the key", "an old coat", "a basket of apples",
    "the money", "a small box", "the map", "a cup of tea", "the horse", "a bundle of wood",
]
ACTIONS = [
    "carried", "found", "lost", "opened", "brought", "sold", "mended", "kept", "gave away",
    "read", "counted", "hid", "wanted",
]
FEELINGS = [
    "happy", "afraid", "weary", "glad", "silent", "angry", "hopeful", "sorry", "curious", "calm",
]
SAYINGS = [
    "I do not know", "it is late", "we shall see", "the road is long", "come in", "all is well",
    "the night is cold", "you are right", "let us go home", "that is enough",
]


def sentence(rng):
    s = rng.choice(SUBJECTS)
    form = rng.randrange(6)
    if form == 0:
        out = f"{s} {rng.choice(VERBS)} {rng.choice(PLACES)} {rng.choice(TIMES)}."
    elif form == 1:
        out = f"{s} {rng.choice(ACTIONS)} {rng.choice(OBJECTS)} and {rng.choice(VERBS)} {rng.choice(PLACES)}."
    elif form == 2:
        out = f"{s} was {rng.choice(FEELINGS)}, for {rng.choice(SUBJECTS)} had {rng.choice(ACTIONS)} {rng.choice(OBJECTS)}."
    elif form == 3:
        out = f'"{rng.choice(SAYINGS).capitalize()}," said {s}.'
        return out[0] + out[1:]
    elif form == 4:
        out = f"{rng.choice(TIMES)} {s} {rng.choice(VERBS)}, and {rng.choice(SUBJECTS)} {rng.choice(VERBS)} {rng.choice(PLACES)}."
    else:
        out = f"{s} {rng.choice(VERBS)} and {rng.choice(VERBS)}, but {rng.choice(SUBJECTS)} was {rng.choice(FEELINGS)}."
    return out[0].upper() + out[1:]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--bytes", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=1813)
    ap.add_argument("--out", default="data/corpus.txt")
    args = ap.parse_args()
    rng = random.Random(args.seed)
    parts, size = [], 0
    while size < args.bytes:
        para = " ".join(sentence(rng) for _ in range(rng.randint(3, 7))) + "\n\n"
        parts.append(para)
        size += len(para)
    text = "".join(parts)[: args.bytes]
    with open(args.out, "w", encoding="ascii", newline="\n") as f:
        f.write(text)


if __name__ == "__main__":
    main()
