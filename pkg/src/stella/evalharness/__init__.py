from .experiments import *  # noqa: F401,F403
from .experiments import __all__ as _exp_all
from .results import ResultRow, hit_at_1, metric_key, parse_metric, params_digest, read_results, write_results

__all__ = [*_exp_all, "ResultRow", "hit_at_1", "metric_key", "parse_metric", "params_digest",
           "read_results", "write_results"]
