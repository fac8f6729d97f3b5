"""deltamv: incremental maintenance of materialized views over versioned tables.

Typical use::

    from deltamv import Pipeline, PipelineSpec, Store

    pipe = Pipeline(Store("ws"), PipelineSpec.load("ws/_enzyme/pipeline.json"))
    report = pipe.run()
"""

from deltamv.pipeline import MvDecl, Pipeline, PipelineSpec, RefreshReport, SourceDecl
from deltamv.storage import Store

__version__ = "0.1.0"

__all__ = ["MvDecl", "Pipeline", "PipelineSpec", "RefreshReport", "SourceDecl", "Store", "__version__"]
