"""latticefs: top-K mutual-information feature subsets per subgroup under
systematic missing data.

The pipeline: partition a discretized dataset into subgroups, build one
feature-subset lattice per subgroup plus cross-subgroup links, compute exact
MI for a budgeted sample of subsets via shared entropy tables, train a
heterogeneous message-passing regressor to predict MI where it cannot be
computed, and rank level-m subsets per subgroup from the merged scores.
"""

__version__ = "0.1.0"

from .kernels import BACKEND as kernel_backend  # noqa: F401
