"""Rebuild data/gutenberg-small.txt.gz from the Project Gutenberg texts
shipped inside the ``shakespeare`` 0.6 source distribution on PyPI.

    pip download shakespeare==0.6 --no-deps --no-binary :all: -d /tmp/shk
    python scripts/build_bundled_corpus.py /tmp/shk/shakespeare-0.6.tar.gz

Hard-wrapped lines are reflowed into one paragraph per output line so the
newline sentence boundary used by the tokenizer does not cut every line.
"""

import gzip
import re
import sys
import tarfile

MILTON = (
    "areopagitica_gut.txt",
    "comus_gut.txt",
    "paradise_lost_(no_introduction)_gut.txt",
    "paradise_regained_gut.txt",
    "poemata_gut.txt",
    "poetical_works_gut.txt",
)


def wanted(name):
    base = name.rsplit("/", 1)[-1]
    if "/shksprdata/texts/" in name:
        return base.endswith("_gut.txt")
    if "/miltondata/texts/" in name:
        return base in MILTON
    return name.endswith("/shksprdata/ancillary/britannica-11th.txt")


def reflow(text):
    paragraphs = re.split(r"\n\s*\n", text.replace("\r\n", "\n"))
    out = []
    for p in paragraphs:
        p = " ".join(line.strip() for line in p.splitlines() if line.strip())
        if p:
            out.append(p)
    return "\n".join(out)


def main(sdist, output="data/gutenberg-small.txt.gz"):
    with tarfile.open(sdist) as tar:
        members = sorted((m for m in tar.getmembers() if wanted(m.name)), key=lambda m: m.name)
        chunks = [reflow(tar.extractfile(m).read().decode("latin-1")) for m in members]
    # mtime=0 keeps the archive byte-reproducible
    with open(output, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as fh:
        fh.write(("\n".join(chunks) + "\n").encode("utf-8"))
    print(f"{len(members)} texts -> {output}")


if __name__ == "__main__":
    main(*sys.argv[1:])
