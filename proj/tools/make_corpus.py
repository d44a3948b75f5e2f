# SPDX-License-Identifier: Apache-2.0
"""Regenerates the bundled text corpus under data/corpus/.

The corpus is synthetic English-like prose sampled from a fixed word list
with a seeded generator, so the repository carries no third-party text and
the files are reproducible byte-for-byte.
"""

import random
from pathlib import Path

WORDS = """
the of and to in a is that for it as was with be by on not he this are or
his from at which but have an they you were her she all would there been
one their them can more when who will no if out so said what up its about
than into time only could other some these two may then do first any my
now such like our over man me even most made after also did many before
must through back years where much your way well down should because each
just those people mr how too little state good very make world still own
see men work long get here between both life being under never day same
another know while last might us great old year off come since against go
came right used take three states himself few house use during without
again place american around however home small found mrs thought went say
part once general high upon school every don does got united left number
course war until always away something fact though water less public put
think almost hand enough far took head yet government system better set
told nothing night end why called didn eyes find going look asked later
knew point next city business program give toward young let room president
side social present given several order national second possible rather
per face among form important often things looked early white case become
large need big four within felt children along saw best church ever least
power development light thing family interest want members mind country
area others although turned done open god service certain kind began
different door thus help means sense whole matter perhaps itself times
human line above name example action company hands local show five whether
gave today either act feet across taken anything seen quite voice
""".split()

PUNCT_PERIOD = 0.72


def make_doc(rng: random.Random, target_bytes: int) -> str:
    out = []
    size = 0
    while size < target_bytes:
        sent_len = rng.randint(4, 14)
        words = [rng.choice(WORDS) for _ in range(sent_len)]
        if sent_len > 8 and rng.random() < 0.4:
            cut = rng.randint(3, sent_len - 2)
            words[cut] = words[cut] + ","
        sentence = " ".join(words)
        sentence = sentence[0].upper() + sentence[1:]
        sentence += "." if rng.random() < PUNCT_PERIOD else "?"
        out.append(sentence)
        size += len(sentence) + 1
        if rng.random() < 0.08:
            out.append("\n")
    return " ".join(out).replace(" \n ", "\n\n") + "\n"


def main() -> None:
    root = Path(__file__).resolve().parent.parent / "data" / "corpus"
    root.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20240901)
    for i in range(4):
        doc = make_doc(rng, 26 * 1024)
        (root / f"doc{i:02d}.txt").write_text(doc, encoding="utf-8")
    total = sum(len(p.read_bytes()) for p in sorted(root.glob("*.txt")))
    print(f"wrote {total} bytes under {root}")


if __name__ == "__main__":
    main()
