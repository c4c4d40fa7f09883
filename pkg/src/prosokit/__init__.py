"""prosokit: Chinese TTS front-end toolkit.

Prosodic-structure markup parsing and scoring, per-character linguistic
feature extraction with D-value pitch encoding, a JSON feature codec,
prompt construction for chat models, an HTTP/mock completion client, and
a reproducible evaluation harness with a bundled fixture corpus.
"""

__version__ = "0.1.0"
