"""streamlat: latency-first design toolkit for streaming convolutional audio autoencoders.

Modules:
  archgraph    declarative architecture specs and analytic latency budgets
  pqmf         near-perfect-reconstruction pseudo-QMF filterbanks
  streamkernel cached-padding streaming execution and empirical receptive fields
  probes       excitation signals with ground-truth onsets, onset detectors
  bench        sound-to-sound latency/jitter harness and real-time-factor bench
  timbreval    timbre-transfer metrics: MMD over MFCC textures, loudness, pitch
  cli          command-line entry point
"""

__version__ = "0.1.0"
