"""Exponential tail bounds and continuity certificates for suprema of random fields.

Main entry points:

* :func:`entropic_tail.bounds.field_tail_bound` - entropy-integral sup-tail bound
* :func:`entropic_tail.partition.partition_tail_y` / :func:`~entropic_tail.partition.search_partition`
* :func:`entropic_tail.continuity.tau_from_tail` / :func:`~entropic_tail.continuity.continuity_modulus`
* :func:`entropic_tail.counterexample.build_model` - the disjoint-bump process
* :func:`entropic_tail.simulate.sample_sup` / :func:`~entropic_tail.simulate.dominance_report`
"""

__version__ = "0.1.0"
