"""BiLSTM part-of-speech tagger trained on a small gold corpus plus noisy projected labels.

A learned bias matrix maps the tagger's clean output distribution onto the
distribution of the projected (cross-lingual) labels, so the noisy corpus
can be used without teaching the tagger its errors.
"""

__version__ = "0.1.0"
