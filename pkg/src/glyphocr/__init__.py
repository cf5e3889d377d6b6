"""Desk-scale OCR engine on a synthetic glyph alphabet.

Pipeline: page image -> deskew -> line bands -> standardized glyphs ->
convolutional classifier -> over-segmentation + trigram/Viterbi decoding.
"""

__version__ = "0.1.0"
