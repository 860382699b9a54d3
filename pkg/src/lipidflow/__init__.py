"""Automatic tracking of tear-film lipid layer spread in eye videos.

The pipeline: detect blinks, align frames on the pupil center, enhance the
lipid texture, segment the iris, seed corner features on the last frame of
each inter-blink period, track them backwards with sparse (Lucas-Kanade) or
dense (Farneback) optical flow, and fit the aggregated displacement with an
exponential decay to obtain characteristic times.
"""

__version__ = "0.1.0"

from lipidflow.video_io import Frame, VideoSequence
from lipidflow.blink import InterBlink
from lipidflow.fit import DecayFit, fit_exponential, pearson

__all__ = [
    "Frame",
    "VideoSequence",
    "InterBlink",
    "DecayFit",
    "fit_exponential",
    "pearson",
    "__version__",
]
