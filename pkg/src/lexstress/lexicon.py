"""Phonemes, syllables, sub-phonemes and word alignments.

Lexicon entries use stress-marked ARPAbet (``"G ER0 AA1 ZH"``).  Alignment
files are JSON lines, one word per line::

    {"word": "garage", "speaker_id": "spk01", "source": "human",
     "phones": [{"symbol": "G", "start_s": 0.0, "end_s": 0.06}, ...],
     "canonical": [0, 1], "realized": [1, 0]}

``realized`` (the spoken stress) and ``audio`` (WAV file name) are optional.
"""
from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

VOWELS = (
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER",
    "EY", "IH", "IY", "OW", "OY", "UH", "UW",
)
CONSONANTS = (
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N",
    "NG", "P", "R", "S", "SH", "T", "TH", "V", "W", "Y", "Z", "ZH",
)
PAD = "<pad>"
# index 0 is reserved for batch padding
INVENTORY = (PAD,) + VOWELS + CONSONANTS
PHONEME_INDEX = {sym: i for i, sym in enumerate(INVENTORY)}
VOWEL_SET = frozenset(VOWELS)
UNVOICED = frozenset(("P", "T", "K", "F", "TH", "S", "SH", "HH", "CH"))

SOURCES = ("human", "synthetic")


class AlignmentError(ValueError):
    """Raised for malformed transcriptions or alignment records."""


def is_vowel(symbol: str) -> bool:
    return symbol in VOWEL_SET


@dataclass(frozen=True)
class Phoneme:
    symbol: str
    start: float
    end: float

    def __post_init__(self):
        if self.symbol not in PHONEME_INDEX or self.symbol == PAD:
            raise AlignmentError(f"unknown phoneme symbol {self.symbol!r}")
        if self.start < 0:
            raise AlignmentError(f"phoneme {self.symbol} starts before 0 s")
        if not self.end > self.start:
            raise AlignmentError(
                f"phoneme {self.symbol} has end {self.end} <= start {self.start}")

    @property
    def is_vowel(self) -> bool:
        return self.symbol in VOWEL_SET

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class SubPhoneme:
    phoneme: int
    half: str  # "left" | "right"
    syllable_index: int
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class Syllable:
    index: int
    start: int  # first phoneme index
    stop: int  # one past the last phoneme index
    nucleus: int

    @property
    def span(self) -> range:
        return range(self.start, self.stop)


def parse_lexicon_entry(entry: str) -> tuple[tuple[str, ...], tuple[int, ...]]:
    """Split a stress-marked transcription into symbols and canonical stress.

    Digit 1 marks the stressed syllable; 0 and 2 both count as unstressed.

    >>> parse_lexicon_entry("G AA1 R AA0 ZH")
    (('G', 'AA', 'R', 'AA', 'ZH'), (1, 0))
    """
    symbols = []
    pattern = []
    for code in entry.split():
        code = code.upper()
        base, digit = code, None
        if code[-1].isdigit():
            base, digit = code[:-1], code[-1]
        if base not in PHONEME_INDEX or base == PAD:
            raise AlignmentError(f"unknown symbol {code!r} in {entry!r}")
        if base in VOWEL_SET:
            if digit not in ("0", "1", "2"):
                raise AlignmentError(f"vowel {code!r} lacks a stress digit in {entry!r}")
            pattern.append(1 if digit == "1" else 0)
        elif digit is not None:
            raise AlignmentError(f"consonant {code!r} carries a stress digit")
        symbols.append(base)
    if len(pattern) < 2:
        raise AlignmentError(f"{entry!r} has fewer than two syllables")
    return tuple(symbols), tuple(pattern)


def syllabify(symbols: Sequence[str]) -> tuple[Syllable, ...]:
    """Group phonemes into syllables, one per vowel.

    Consonants between vowels join the following vowel (onset attachment);
    trailing consonants join the last syllable.
    """
    nuclei = [i for i, s in enumerate(symbols) if s in VOWEL_SET]
    if not nuclei:
        raise AlignmentError(f"no vowels in {' '.join(symbols)!r}")
    syllables = []
    start = 0
    for k, nucleus in enumerate(nuclei):
        # consonants right after a non-final nucleus belong to the next onset
        stop = nucleus + 1 if k + 1 < len(nuclei) else len(symbols)
        syllables.append(Syllable(k, start, stop, nucleus))
        start = stop
    return tuple(syllables)


@dataclass(frozen=True)
class WordAlignment:
    word: str
    phonemes: tuple[Phoneme, ...]
    canonical: tuple[int, ...]
    realized: tuple[int, ...] | None = None
    speaker_id: str = ""
    source: str = "human"
    audio: str = ""  # WAV file name, relative to the audio directory
    syllables: tuple[Syllable, ...] = field(default=(), compare=False)

    def __post_init__(self):
        symbols = [p.symbol for p in self.phonemes]
        if not symbols:
            raise AlignmentError(f"word {self.word!r} has no phonemes")
        for a, b in zip(self.phonemes, self.phonemes[1:]):
            if b.start < a.end - 1e-9:
                raise AlignmentError(
                    f"phonemes {a.symbol} and {b.symbol} overlap in {self.word!r}")
            if b.start > a.end + 1e-9:
                raise AlignmentError(
                    f"gap between {a.symbol} and {b.symbol} in {self.word!r}")
        syllables = syllabify(symbols)
        if len(syllables) < 2:
            raise AlignmentError(f"{self.word!r} has fewer than two syllables")
        object.__setattr__(self, "syllables", syllables)
        object.__setattr__(self, "canonical", tuple(int(v) for v in self.canonical))
        if len(self.canonical) != len(syllables):
            raise AlignmentError(
                f"{self.word!r}: canonical pattern has {len(self.canonical)} "
                f"flags for {len(syllables)} syllables")
        if self.realized is not None:
            object.__setattr__(self, "realized", tuple(int(v) for v in self.realized))
            if len(self.realized) != len(syllables):
                raise AlignmentError(
                    f"{self.word!r}: realized pattern has wrong length")
        if self.source not in SOURCES:
            raise AlignmentError(f"unknown source {self.source!r}")

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(p.symbol for p in self.phonemes)

    @property
    def n_syllables(self) -> int:
        return len(self.syllables)

    @property
    def start(self) -> float:
        return self.phonemes[0].start

    @property
    def end(self) -> float:
        return self.phonemes[-1].end

    @property
    def duration(self) -> float:
        return self.end - self.start

    @property
    def is_error(self) -> bool:
        """True when the realized stress differs from the canonical one."""
        if self.realized is None:
            raise AlignmentError(f"{self.word!r} has no realized stress label")
        return self.realized != self.canonical

    def syllable_of(self) -> tuple[int, ...]:
        """Syllable index of every phoneme."""
        out = [0] * len(self.phonemes)
        for syl in self.syllables:
            for i in syl.span:
                out[i] = syl.index
        return tuple(out)


def split_subphonemes(alignment: WordAlignment) -> tuple[SubPhoneme, ...]:
    """Cut every phoneme at its temporal midpoint into left/right halves."""
    syl = alignment.syllable_of()
    out = []
    for i, ph in enumerate(alignment.phonemes):
        mid = 0.5 * (ph.start + ph.end)
        out.append(SubPhoneme(i, "left", syl[i], ph.start, mid))
        out.append(SubPhoneme(i, "right", syl[i], mid, ph.end))
    return tuple(out)


def make_alignment(word: str, entry: str, durations: Sequence[float], start: float = 0.0,
                   **kwargs) -> WordAlignment:
    """Build an alignment from a lexicon entry and per-phoneme durations."""
    symbols, canonical = parse_lexicon_entry(entry)
    if len(durations) != len(symbols):
        raise AlignmentError(f"{len(durations)} durations for {len(symbols)} phonemes")
    phones = []
    t = start
    for sym, d in zip(symbols, durations):
        phones.append(Phoneme(sym, t, t + d))
        t += d
    return WordAlignment(word, tuple(phones), canonical, **kwargs)


# -- file format -------------------------------------------------------------

def alignment_to_record(al: WordAlignment) -> dict:
    rec = {
        "word": al.word,
        "speaker_id": al.speaker_id,
        "source": al.source,
        "phones": [{"symbol": p.symbol, "start_s": p.start, "end_s": p.end}
                   for p in al.phonemes],
        "canonical": list(al.canonical),
    }
    if al.realized is not None:
        rec["realized"] = list(al.realized)
    if al.audio:
        rec["audio"] = al.audio
    return rec


def alignment_from_record(rec: dict, index: int = 0) -> WordAlignment:
    try:
        phones = []
        for j, ph in enumerate(rec["phones"]):
            try:
                phones.append(Phoneme(str(ph["symbol"]), float(ph["start_s"]),
                                      float(ph["end_s"])))
            except AlignmentError as exc:
                raise AlignmentError(f"phone {j}: {exc}") from None
        return WordAlignment(
            word=str(rec["word"]),
            phonemes=tuple(phones),
            canonical=tuple(rec["canonical"]),
            realized=tuple(rec["realized"]) if rec.get("realized") is not None else None,
            speaker_id=str(rec.get("speaker_id", "")),
            source=str(rec.get("source", "human")),
            audio=str(rec.get("audio", "")),
        )
    except AlignmentError as exc:
        raise AlignmentError(f"record {index}: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise AlignmentError(f"record {index}: malformed record ({exc!r})") from None


def write_alignment_file(alignments: Iterable[WordAlignment], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(json.dumps(alignment_to_record(al)) + "\n" for al in alignments)


def read_alignment_file(path) -> list[WordAlignment]:
    out = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AlignmentError(f"record {i}: invalid JSON ({exc.msg})") from None
        out.append(alignment_from_record(rec, i))
    return out


def load_lexicon(path=None) -> dict[str, str]:
    """Read a ``WORD  PH1 PH2 ...`` pronunciation list (CMUdict layout)."""
    if path is None:
        path = Path(__file__).with_name("data") / "lexicon.txt"
    lexicon = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith(";;;"):
            continue
        word, entry = line.split(None, 1)
        lexicon[word.lower()] = entry
    return lexicon
