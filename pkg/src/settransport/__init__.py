"""Distribution-conditioned transport between sample sets.

Set encoders embed whole sample sets; conditional generators move points
from a source set toward a target distribution given those embeddings.  The
package covers data generation, training, evaluation metrics, diagnostics,
and a config-driven experiment runner with a CLI front end.

Modules are imported directly (``from settransport.metrics import swd``);
only the version lives here.
"""

__version__ = "0.1.0"
