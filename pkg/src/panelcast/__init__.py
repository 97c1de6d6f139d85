"""panelcast: wave-by-wave nonresponse prediction for panel surveys.

Builds time-windowed aggregate features from response histories, trains and
tunes five model families under rolling-origin temporal cross-validation,
and selects/report models by their mean test performance over time.
"""

from .errors import PipelineError

__version__ = "0.1.0"

__all__ = ["PipelineError", "__version__"]
