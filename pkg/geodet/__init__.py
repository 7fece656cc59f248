"""
geodet: geographical-detector analysis of monthly surveillance rates.

Factor detector (q-statistic with significance)::

    from geodet.detector import factor_detector, q_statistic
    from geodet.stratify import stratify_quantile

Interaction detector::

    from geodet.detector import classify_interaction, interaction

Inverse-distance weighting onto city points::

    from geodet.geo_interp import IdwInterpolator, haversine_km, idw

Batch pipeline from CSV tables to a report bundle::

    from geodet.config import AnalysisConfig
    from geodet.pipeline import prepare_inputs, run_analysis

Synthetic data with known answers::

    from geodet.synthetic import SeasonalSpec, generate, generate_seasonal
"""

from importlib.metadata import version as _metadata_version

try:
    __version__: str = _metadata_version("geodet")
except Exception:
    __version__ = "0.0.0"
