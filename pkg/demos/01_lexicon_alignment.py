"""Parse a pronunciation, split it into syllables and sub-phoneme halves.

Run: python demos/01_lexicon_alignment.py
"""
from lexstress.lexicon import (
    load_lexicon,
    make_alignment,
    parse_lexicon_entry,
    split_subphonemes,
    syllabify,
)

lexicon = load_lexicon()
print(f"lexicon: {len(lexicon)} words")

entry = lexicon["garage"]
symbols, canonical = parse_lexicon_entry(entry)
print(f"garage -> {entry}  canonical stress {canonical}")
for i, syl in enumerate(syllabify(symbols)):
    print(f"  syllable {i}: {syl}")

# a hand-made alignment: four phonemes starting 50 ms into the recording
al = make_alignment("garage", entry, [0.06, 0.09, 0.135, 0.06], start=0.05,
                    speaker_id="s1", realized=(1, 0))
print(f"realized {al.realized}, is stress error: {al.is_error}")
for sp in split_subphonemes(al):
    print(f"  {sp}")
