"""
Agent tools wrapping the simulator, the pipeline and the experiments.

The following class is available:

    * :class `CoStateFusionToolkit`
"""
from costate_fusion.tools.toolkit import CoStateFusionToolkit

__all__ = ["CoStateFusionToolkit"]
