"""Neural trainer service for CAPTCHA recognition studies.

Two model families behind one HTTP adapter service: a CRNN recognizer
trained with CTC loss (with frozen-layer fine-tuning), and a
cycle-consistent image-to-image synthesizer. The service speaks adapter
protocol v1; datasets move as manifest directories on disk.
"""

__version__ = "0.1.0"
