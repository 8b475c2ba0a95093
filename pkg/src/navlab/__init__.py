"""navlab: a desk-scale laboratory for hierarchical fast-slow navigation.

Pieces: an inflated-grid world with geodesic distances (env), shaped rewards
with wandering suppression (reward), a fast executor / slow planner split
with pluggable planners (hier), a recurrent actor-critic trained by clipped
surrogate updates with hand-written gradients (policy), SR/SPL and latency
metrics (metrics), and grammar/temporal/semantic quality control for
interval annotations (annot).
"""

__version__ = "0.1.0"
