"""Closed-loop outfit styling pipeline.

Generates a garment plan with a ranked pool of vision-language experts,
buys each piece through image search, dresses the user photo garment by
garment with an image editor, and grades the result on four metrics.
Every stage that can disappoint runs inside the same threshold-gated
feedback loop.  All model traffic goes through pluggable ports, so the
whole pipeline replays deterministically against scripted scenarios.
"""

__version__ = "0.1.0"
