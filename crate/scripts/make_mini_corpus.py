#!/usr/bin/env python3
"""Writes the bundled toy data under data/mini/.

Every sentence is parsed by hand: the frames below spell out the dependency
structure and this script only renders them as CoNLL-U. The embeddings and
the annotated pairs are synthetic and exist so the CLI stages can be run end
to end; they carry no linguistic signal beyond what is described here.

Usage: python3 scripts/make_mini_corpus.py [OUT_DIR]
"""

import json
import random
import sys
from pathlib import Path

DETS = {"the", "a", "an", "every", "this"}
HONORIFICS = {"Mr.", "Mrs.", "Ms.", "Dr."}

# Plural forms whose lemma is not a simple strip of the final "s".
IRREGULAR = {"people": "person", "children": "child", "knives": "knife", "libraries": "library"}


def noun_lemma(word):
    w = word.lower()
    if w in IRREGULAR:
        return IRREGULAR[w]
    return w


def np(text, plural_lemma=None):
    """Noun phrase tokens as (form, lemma, upos, local_head, deprel).

    local_head is an offset into the phrase, or None for the phrase head.
    Accepted shapes: [DET] ADJ* NOUN, or HONORIFIC NAME, or NAME.
    """
    words = text.split()
    if words[0] in HONORIFICS:
        toks = [(words[0], words[0], "PROPN", None, None)]
        toks += [(w, w, "PROPN", 0, "flat") for w in words[1:]]
        return toks
    if words[0][0].isupper() and words[0].lower() not in DETS:
        toks = [(words[0], words[0], "PROPN", None, None)]
        toks += [(w, w, "PROPN", 0, "flat") for w in words[1:]]
        return toks
    head = len(words) - 1
    toks = []
    for i, w in enumerate(words):
        if i == head:
            lemma = plural_lemma or noun_lemma(w)
            toks.append((w, lemma, "NOUN", None, None))
        elif i == 0 and w.lower() in DETS:
            lemma = "a" if w.lower() == "an" else w.lower()
            toks.append((w, lemma, "DET", head, "det"))
        else:
            toks.append((w, w.lower(), "ADJ", head, "amod"))
    return toks


def plural(text, lemma):
    return np(text, plural_lemma=lemma)


class Builder:
    """Assembles one clause: subject, verb group, object, obliques."""

    def __init__(self):
        self.toks = []

    def add_phrase(self, toks, head_of_phrase, deprel):
        base = len(self.toks)
        head_pos = None
        for i, (form, lemma, upos, local, rel) in enumerate(toks):
            if local is None:
                head_pos = base + i
        for form, lemma, upos, local, rel in toks:
            if local is None:
                self.toks.append([form, lemma, upos, head_of_phrase, deprel])
            else:
                self.toks.append([form, lemma, upos, ("local", base + local), rel])
        return head_pos

    def add(self, form, lemma, upos, head, deprel):
        self.toks.append([form, lemma, upos, head, deprel])
        return len(self.toks) - 1

    def render(self, root_pos):
        out = []
        for i, (form, lemma, upos, head, rel) in enumerate(self.toks):
            if i == root_pos:
                h, rel = 0, "root"
            elif isinstance(head, tuple):
                h = head[1] + 1
            else:
                h = head + 1
            out.append((i + 1, form, lemma, upos, h, rel))
        return out


def verbal(subj, verb, obj=None, obls=(), neg=False, aux=None):
    """subj VERB [obj] [prep np]* .  verb is (form, lemma)."""
    b = Builder()
    root = "ROOT"
    b.add_phrase(subj, root, "nsubj")
    if aux:
        b.add(aux[0], aux[1], "AUX", root, "aux")
    if neg:
        b.add("not", "not", "PART", root, "advmod")
    v = b.add(verb[0], verb[1], "VERB", None, "root")
    if obj is not None:
        b.add_phrase(obj, root, "obj")
    for prep, phrase in obls:
        c = b.add(prep, prep, "ADP", None, "case")
        h = b.add_phrase(phrase, root, "obl")
        b.toks[c][3] = h
    b.add(".", ".", "PUNCT", root, "punct")
    for t in b.toks:
        if t[3] == "ROOT":
            t[3] = v
    return b.render(v)


def copular(subj, adj, neg=False, cop=("is", "be")):
    """subj is [not] ADJ ."""
    b = Builder()
    b.add_phrase(subj, "ROOT", "nsubj")
    b.add(cop[0], cop[1], "AUX", "ROOT", "cop")
    if neg:
        b.add("not", "not", "PART", "ROOT", "advmod")
    a = b.add(adj, adj, "ADJ", None, "root")
    b.add(".", ".", "PUNCT", "ROOT", "punct")
    for t in b.toks:
        if t[3] == "ROOT":
            t[3] = a
    return b.render(a)


def capitalized(rows):
    return [(i, form[0].upper() + form[1:] if i == 1 else form, *rest) for i, form, *rest in rows]


def sentence_text(rows):
    return " ".join(r[1] for r in capitalized(rows))


def conllu(sid, rows):
    rows = capitalized(rows)
    text = sentence_text(rows)
    lines = [f"# sent_id = {sid}", f"# text = {text}"]
    for i, form, lemma, upos, head, rel in rows:
        lines.append(f"{i}\t{form}\t{lemma}\t{upos}\t_\t_\t{head}\t{rel}\t_\t_")
    return "\n".join(lines) + "\n"


V = lambda form, lemma: (form, lemma)  # noqa: E731


def corpus_sentences():
    S = []
    # Publications.
    for who in ["Mrs. Jones", "Dr. Lee", "Mr. Brown", "Ms. Green"]:
        S.append(verbal(np(who), V("subscribes", "subscribe"), obls=[("to", np("a magazine"))]))
        S.append(verbal(np(who), V("borrows", "borrow"), np("a book"), [("from", np("the library"))]))
    S.append(verbal(plural("people", "person"), V("subscribe", "subscribe"), obls=[("to", np("a magazine"))]))
    S.append(verbal(np("a person"), V("subscribes", "subscribe"), obls=[("to", np("the magazine"))]))
    S.append(verbal(np("a person"), V("borrows", "borrow"), np("the book"), [("from", np("a library"))]))
    S.append(verbal(plural("people", "person"), V("borrow", "borrow"), np("a book"), [("from", np("the library"))]))
    for who in ["Mrs. Jones", "Dr. Lee", "a person"]:
        S.append(verbal(np(who), V("reads", "read"), np("the book")))
        S.append(verbal(np(who), V("reads", "read"), np("a magazine")))
    S.append(verbal(np("Mr. Brown"), V("writes", "write"), np("a book")))
    S.append(verbal(np("Ms. Green"), V("writes", "write"), np("the book")))
    S.append(verbal(np("Dr. Lee"), V("compiles", "compile"), np("a collection")))
    S.append(verbal(np("a person"), V("compiles", "compile"), np("the collection")))
    S.append(verbal(np("the collection"), V("contains", "contain"), plural("poems", "poem")))
    S.append(verbal(np("the collection"), V("contains", "contain"), plural("stories", "story")))
    S.append(verbal(np("the magazine"), V("contains", "contain"), plural("pictures", "picture")))
    S.append(verbal(np("Mrs. Jones"), V("reads", "read"), np("the collection")))
    S.append(verbal(np("Mr. Brown"), V("returns", "return"), np("the book"), [("to", np("the library"))]))
    S.append(verbal(np("Dr. Lee"), V("returns", "return"), np("a book"), [("to", np("the library"))]))
    S.append(verbal(np("a person"), V("read", "read"), np("the magazine"), neg=True, aux=("does", "do")))
    S.append(copular(np("the book"), "long"))
    S.append(copular(np("the book"), "interesting"))
    S.append(copular(np("the magazine"), "glossy"))
    S.append(copular(np("the magazine"), "thin"))
    S.append(copular(np("the collection"), "large"))

    # Bodies of water.
    for adj in ["carbonated", "salty", "deep", "blue", "cold", "vast"]:
        S.append(copular(np("the ocean"), adj))
    for adj in ["calm", "frozen", "shallow"]:
        S.append(copular(np("the lake"), adj))
    for adj in ["wide", "muddy"]:
        S.append(copular(np("the river"), adj))
    S.append(copular(np("the sea"), "rough"))
    S.append(copular(np("the sea"), "salty"))
    S.append(copular(np("the lake"), "salty", neg=True))
    S.append(verbal(plural("people", "person"), V("swim", "swim"), obls=[("in", np("the ocean"))]))
    S.append(verbal(np("a person"), V("swims", "swim"), obls=[("in", np("the lake"))]))
    S.append(verbal(np("Dr. Lee"), V("swims", "swim"), obls=[("in", np("the sea"))]))
    S.append(verbal(np("Mr. Brown"), V("sails", "sail"), obls=[("across", np("the ocean"))]))
    S.append(verbal(np("Ms. Green"), V("sails", "sail"), obls=[("across", np("the lake"))]))
    S.append(verbal(np("Mrs. Jones"), V("crosses", "cross"), np("the river")))
    S.append(verbal(np("a person"), V("crosses", "cross"), np("the river")))
    S.append(verbal(np("the river"), V("flows", "flow"), obls=[("into", np("the sea"))]))
    S.append(verbal(np("the river"), V("flows", "flow"), obls=[("into", np("the ocean"))]))
    S.append(verbal(np("the river"), V("floods", "flood"), np("the town")))
    S.append(verbal(np("the ocean"), V("covers", "cover"), np("the earth")))
    S.append(verbal(np("a fish"), V("lives", "live"), obls=[("in", np("the ocean"))]))
    S.append(verbal(np("a fish"), V("lives", "live"), obls=[("in", np("the lake"))]))
    S.append(verbal(np("a fish"), V("lives", "live"), obls=[("in", np("the river"))]))

    # Animals.
    S.append(verbal(np("the dog"), V("chases", "chase"), np("the cat")))
    S.append(verbal(np("a dog"), V("chases", "chase"), np("a ball")))
    S.append(verbal(np("the dog"), V("barks", "bark"), obls=[("at", np("the cat"))]))
    S.append(verbal(np("the dog"), V("barks", "bark"), obls=[("at", np("the stranger"))]))
    S.append(verbal(np("the cat"), V("chases", "chase"), np("a mouse")))
    S.append(verbal(np("the cat"), V("catches", "catch"), np("a mouse")))
    S.append(verbal(np("the cat"), V("sleeps", "sleep"), obls=[("on", np("the bed"))]))
    S.append(verbal(np("the horse"), V("eats", "eat"), np("an apple")))
    S.append(verbal(np("the horse"), V("pulls", "pull"), np("a cart")))
    S.append(verbal(np("Mr. Brown"), V("rides", "ride"), np("the horse")))
    S.append(verbal(np("Ms. Green"), V("rides", "ride"), np("a horse")))
    S.append(verbal(np("Mrs. Jones"), V("feeds", "feed"), np("the dog")))
    S.append(verbal(np("a person"), V("feeds", "feed"), np("the cat")))
    S.append(verbal(np("Dr. Lee"), V("walks", "walk"), np("the dog")))
    S.append(copular(np("the dog"), "loyal"))
    S.append(copular(np("the dog"), "hungry"))
    S.append(copular(np("the cat"), "lazy"))
    S.append(copular(np("the horse"), "fast"))
    S.append(copular(np("the horse"), "strong"))
    S.append(verbal(np("the brown dog"), V("digs", "dig"), np("a hole")))
    S.append(verbal(np("the old horse"), V("drinks", "drink"), obls=[("from", np("the river"))]))

    # Vehicles.
    for who in ["Mr. Brown", "Ms. Green", "a person"]:
        S.append(verbal(np(who), V("drives", "drive"), np("the car")))
    S.append(verbal(np("Dr. Lee"), V("drives", "drive"), np("the truck")))
    S.append(verbal(np("Mrs. Jones"), V("rides", "ride"), np("a bicycle")))
    S.append(verbal(np("a person"), V("rides", "ride"), np("the bicycle")))
    S.append(verbal(np("Mr. Brown"), V("parks", "park"), np("the car"), [("near", np("the house"))]))
    S.append(verbal(np("Ms. Green"), V("repairs", "repair"), np("the bicycle")))
    S.append(verbal(np("the truck"), V("carries", "carry"), np("the cargo")))
    S.append(verbal(np("the truck"), V("carries", "carry"), plural("apples", "apple")))
    S.append(verbal(np("the car"), V("needs", "need"), np("fuel")))
    S.append(copular(np("the car"), "fast"))
    S.append(copular(np("the car"), "red"))
    S.append(copular(np("the truck"), "heavy"))
    S.append(copular(np("the bicycle"), "light"))

    # Tools.
    S.append(verbal(np("Dave"), V("chops", "chop"), np("the wood"), [("with", np("an axe"))]))
    S.append(verbal(np("Mr. Brown"), V("chops", "chop"), np("a tree"), [("with", np("the axe"))]))
    S.append(verbal(np("a person"), V("cuts", "cut"), np("the bread"), [("with", np("a knife"))]))
    S.append(verbal(np("Mrs. Jones"), V("cuts", "cut"), np("the cake"), [("with", np("the knife"))]))
    S.append(verbal(np("Dr. Lee"), V("hits", "hit"), np("the nail"), [("with", np("a hammer"))]))
    S.append(verbal(np("Ms. Green"), V("holds", "hold"), np("the hammer")))
    S.append(verbal(np("a person"), V("sharpens", "sharpen"), np("the knife")))
    S.append(verbal(np("Mr. Brown"), V("sharpens", "sharpen"), np("the axe")))
    S.append(copular(np("the knife"), "sharp"))
    S.append(copular(np("the axe"), "sharp"))
    S.append(copular(np("the hammer"), "heavy"))

    # Food.
    for who in ["Mrs. Jones", "Dr. Lee", "a person"]:
        S.append(verbal(np(who), V("eats", "eat"), np("an apple")))
    S.append(verbal(np("Mr. Brown"), V("eats", "eat"), np("the bread")))
    S.append(verbal(np("Ms. Green"), V("bakes", "bake"), np("a cake")))
    S.append(verbal(np("a person"), V("bakes", "bake"), np("the bread")))
    S.append(verbal(np("Mrs. Jones"), V("bakes", "bake"), np("the cake"), [("for", np("the party"))]))
    S.append(verbal(np("Dr. Lee"), V("buys", "buy"), np("bread"), [("at", np("the market"))]))
    S.append(verbal(np("Mr. Brown"), V("picks", "pick"), np("an apple"), [("from", np("the tree"))]))
    S.append(copular(np("the apple"), "red"))
    S.append(copular(np("the apple"), "sweet"))
    S.append(copular(np("the bread"), "fresh"))
    S.append(copular(np("the cake"), "sweet"))
    S.append(copular(np("the cake"), "delicious"))

    # Buildings and people.
    S.append(verbal(np("Mrs. Jones"), V("cleans", "clean"), np("the house")))
    S.append(verbal(np("a person"), V("builds", "build"), np("a house")))
    S.append(verbal(np("Mr. Brown"), V("paints", "paint"), np("the house")))
    S.append(verbal(np("Dr. Lee"), V("visits", "visit"), np("the library")))
    S.append(verbal(np("Ms. Green"), V("visits", "visit"), np("the school")))
    S.append(verbal(plural("children", "child"), V("attend", "attend"), np("the school")))
    S.append(verbal(np("the teacher"), V("teaches", "teach"), plural("children", "child"), [("at", np("the school"))]))
    S.append(verbal(np("a person"), V("accomplishes", "accomplish"), np("the goal")))
    S.append(verbal(np("Ms. Green"), V("sets", "set"), np("a goal")))
    S.append(verbal(np("Mr. Brown"), V("reaches", "reach"), np("the goal")))
    S.append(copular(np("the house"), "old"))
    S.append(copular(np("the house"), "big"))
    S.append(copular(np("the library"), "quiet"))
    S.append(copular(np("the school"), "new"))
    S.append(copular(np("the goal"), "ambitious"))
    S.append(copular(np("Mrs. Jones"), "happy"))
    S.append(copular(np("Dr. Lee"), "busy"))
    return S


def context_sentences():
    C = []
    C.append(verbal(np("Mrs. Jones"), V("reads", "read"), np("a magazine"), [("at", np("the library"))]))
    C.append(verbal(np("Dave"), V("chops", "chop"), np("the tree"), [("with", np("an axe"))]))
    C.append(verbal(plural("people", "person"), V("swim", "swim"), obls=[("in", np("the ocean"))]))
    C.append(verbal(np("Dr. Lee"), V("drives", "drive"), np("the car"), [("to", np("the school"))]))
    C.append(verbal(np("the dog"), V("chases", "chase"), np("the cat"), [("into", np("the house"))]))
    C.append(verbal(np("Ms. Green"), V("cuts", "cut"), np("the apple"), [("with", np("a knife"))]))
    C.append(verbal(np("Mr. Brown"), V("borrows", "borrow"), np("a book")))
    C.append(verbal(np("a person"), V("rides", "ride"), np("the horse"), [("across", np("the river"))]))
    return C


TAXONOMY = [
    ("entity.n.01", []),
    ("physical_entity.n.01", ["entity.n.01"]),
    ("abstraction.n.06", ["entity.n.01"]),
    ("thing.n.12", ["physical_entity.n.01"]),
    ("object.n.01", ["physical_entity.n.01"]),
    ("causal_agent.n.01", ["physical_entity.n.01"]),
    ("matter.n.03", ["physical_entity.n.01"]),
    ("person.n.01", ["causal_agent.n.01"]),
    ("body_of_water.n.01", ["thing.n.12"]),
    ("ocean.n.01", ["body_of_water.n.01"]),
    ("sea.n.01", ["body_of_water.n.01"]),
    ("lake.n.01", ["body_of_water.n.01"]),
    ("river.n.01", ["body_of_water.n.01"]),
    ("living_thing.n.01", ["object.n.01"]),
    ("organism.n.01", ["living_thing.n.01"]),
    ("animal.n.01", ["organism.n.01"]),
    ("dog.n.01", ["animal.n.01"]),
    ("cat.n.01", ["animal.n.01"]),
    ("horse.n.01", ["animal.n.01"]),
    ("fish.n.01", ["animal.n.01"]),
    ("mouse.n.01", ["animal.n.01"]),
    ("artifact.n.01", ["object.n.01"]),
    ("instrumentality.n.03", ["artifact.n.01"]),
    ("vehicle.n.01", ["instrumentality.n.03"]),
    ("car.n.01", ["vehicle.n.01"]),
    ("truck.n.01", ["vehicle.n.01"]),
    ("bicycle.n.01", ["vehicle.n.01"]),
    ("cart.n.01", ["vehicle.n.01"]),
    ("tool.n.01", ["instrumentality.n.03"]),
    ("axe.n.01", ["tool.n.01"]),
    ("knife.n.01", ["tool.n.01"]),
    ("hammer.n.02", ["tool.n.01"]),
    ("structure.n.01", ["artifact.n.01"]),
    ("building.n.01", ["structure.n.01"]),
    ("house.n.01", ["building.n.01"]),
    ("library.n.01", ["building.n.01"]),
    ("school.n.01", ["building.n.01"]),
    ("food.n.01", ["matter.n.03"]),
    ("apple.n.01", ["food.n.01"]),
    ("bread.n.01", ["food.n.01"]),
    ("cake.n.03", ["food.n.01"]),
    ("communication.n.02", ["abstraction.n.06"]),
    ("written_communication.n.01", ["communication.n.02"]),
    ("publication.n.01", ["written_communication.n.01"]),
    ("book.n.01", ["publication.n.01"]),
    ("magazine.n.01", ["publication.n.01"]),
    ("collection.n.02", ["publication.n.01"]),
    ("psychological_feature.n.01", ["abstraction.n.06"]),
    ("cognition.n.01", ["psychological_feature.n.01"]),
    ("content.n.05", ["cognition.n.01"]),
    ("goal.n.01", ["content.n.05"]),
    # A second sense so that lemma lookup has to pick the first one.
    ("book.n.02", ["abstraction.n.06"]),
]


def taxonomy_tsv():
    lines = ["# sense\tnumber\thypernyms"]
    for sense, parents in TAXONOMY:
        number = int(sense.rsplit(".", 1)[1])
        lines.append(f"{sense}\t{number}\t{','.join(parents) if parents else '_'}")
    return "\n".join(lines) + "\n"


def embeddings(vocab, dim, rng):
    # Topic-clustered random vectors: words of one topic share a centroid.
    topics = {}
    rows = []
    for word, topic in vocab:
        if topic not in topics:
            topics[topic] = [rng.gauss(0, 1) for _ in range(dim)]
        c = topics[topic]
        rows.append(word + " " + " ".join(f"{x + 0.3 * rng.gauss(0, 1):.5f}" for x in c))
    return f"{len(rows)} {dim}\n" + "\n".join(rows) + "\n"


EMB_VOCAB = [
    (w, t)
    for t, ws in {
        "read": ["book", "magazine", "collection", "library", "read", "borrow", "subscribe", "write", "page"],
        "water": ["ocean", "sea", "lake", "river", "swim", "sail", "salty", "wet", "fish", "water"],
        "animal": ["dog", "cat", "horse", "mouse", "chase", "bark", "feed", "ride", "animal"],
        "vehicle": ["car", "truck", "bicycle", "drive", "park", "fast", "road"],
        "tool": ["axe", "knife", "hammer", "chop", "cut", "sharp", "tree", "wood"],
        "food": ["apple", "bread", "cake", "eat", "bake", "sweet", "hungry"],
        "home": ["house", "school", "teacher", "child", "clean", "build", "goal"],
        "people": ["person", "people", "a", "the", "is", "are", "at", "with", "in", "to", "."],
    }.items()
    for w in ws
]

TOPIC_OF = {w: t for w, t in EMB_VOCAB}

HYPOTHESES = {
    "read": ["The book is long .", "A person reads the magazine .", "The library is quiet .", "A person borrows a book ."],
    "water": ["The ocean is salty .", "The fish lives in the water .", "The lake is wet .", "A person swims in the sea ."],
    "animal": ["The dog is hungry .", "The cat chases a mouse .", "A person rides the horse ."],
    "vehicle": ["The car is fast .", "A person drives the truck .", "The truck is on the road ."],
    "tool": ["The axe is sharp .", "The knife cuts the bread .", "A person chops the wood ."],
    "food": ["The apple is sweet .", "A person eats the bread .", "The cake is sweet ."],
    "home": ["The house is old .", "The teacher is at the school .", "A person cleans the house ."],
}


def topic(sentence):
    counts = {}
    for w in sentence.lower().split():
        t = TOPIC_OF.get(w)
        if t and t != "people":
            counts[t] = counts.get(t, 0) + 1
    return max(sorted(counts), key=lambda t: counts[t]) if counts else None


def pairs(contexts, rng, n):
    """Toy pairs: a hypothesis on the context's topic is judged likely,
    otherwise unlikely; three simulated workers add noise."""
    out = []
    topics = sorted(HYPOTHESES)
    for i in range(n):
        ctx = contexts[i % len(contexts)]
        t = topic(ctx)
        same = rng.random() < 0.5 and t in HYPOTHESES
        pool = HYPOTHESES[t] if same else HYPOTHESES[rng.choice([x for x in topics if x != t])]
        hyp = rng.choice(pool)
        centre = 4.3 if same else 1.7
        anns = []
        for worker in ["w1", "w2", "w3"]:
            v = min(5, max(1, round(centre + rng.gauss(0, 0.9))))
            anns.append({"worker": worker, "label": v})
        out.append({"context": ctx, "hypothesis": hyp, "annotations": anns, "provenance": "toy"})
    return out


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "mini"
    out.mkdir(parents=True, exist_ok=True)
    sents = corpus_sentences()
    (out / "corpus.conllu").write_text(
        "\n".join(conllu(f"mini-{i + 1:03d}", s) for i, s in enumerate(sents))
    )
    ctxs = context_sentences()
    (out / "contexts.conllu").write_text(
        "\n".join(conllu(f"ctx-{i + 1:02d}", s) for i, s in enumerate(ctxs))
    )
    (out / "taxonomy.tsv").write_text(taxonomy_tsv())
    rng = random.Random(7)
    (out / "embeddings.txt").write_text(embeddings(EMB_VOCAB, 16, rng))
    texts = [sentence_text(s) for s in sents + ctxs]
    rng_a = random.Random(11)
    (out / "pairs_train.jsonl").write_text(
        "".join(json.dumps(p) + "\n" for p in pairs(texts, rng_a, 160))
    )
    (out / "pairs_test.jsonl").write_text(
        "".join(json.dumps(p) + "\n" for p in pairs(list(reversed(texts)), rng_a, 80))
    )
    print(f"{len(sents)} corpus sentences, {len(ctxs)} contexts -> {out}")


if __name__ == "__main__":
    main()
