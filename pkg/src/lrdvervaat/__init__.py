"""Sequential empirical, quantile, Bahadur-Kiefer and Vervaat processes under long-range dependence."""
__version__ = "0.1.0"
