"""Maximum-likelihood PSD estimation under rank-deficient directional noise.

The package provides closed-form per-frequency estimators of the
reverberation, speech and directional-noise power spectral densities,
the matching variance/CRB expressions with a numeric Fisher oracle, a
Monte-Carlo harness, and a multichannel Wiener filter for dereverberation
and noise reduction of audio files.
"""

__version__ = "0.1.0"
