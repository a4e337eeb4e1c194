"""melodica: a simulated robot music-therapy platform.

Subsystems:

- ``instrument``: the 11-bar diatonic glockenspiel model (notes, geometry, colors)
- ``audio``: melody synthesis, STFT note detection, WAV I/O
- ``scoring``: edit-distance playback scoring and the practice policy
- ``trajectory``: arm kinematics, strike planning and simulated execution
- ``vision``: synthetic camera views and color-based instrument pose estimation
- ``session``: the therapy-session automaton and turn-taking grading
- ``affect``: EDA wavelet features with SVM/KNN classification and evaluation
- ``cli`` / ``service``: command-line tools and the WebSocket session service
"""

__version__ = "0.1.0"
