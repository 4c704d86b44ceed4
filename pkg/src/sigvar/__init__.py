"""Chance-constrained nonlinear programming via sigmoidal approximation.

The package solves problems of the form

    min  E[objective(x, y(xi), xi)]
    s.t. P(f(x, y(xi), xi) <= 0) >= 1 - alpha,   g(x) >= 0,  h(x, y, xi) >= 0

by sample averaging the chance constraint and replacing the indicator
with a hinged sigmoidal kernel whose sharpness is driven along a
continuation schedule.  Modules:

* ``risk_kernels``   scalar kernels majorizing the step indicator
* ``risk_measures``  empirical VaR / CVaR / EVaR / SigVaR of a sample
* ``scenario``       reproducible scenario generation and CSV persistence
* ``problem_model``  two-stage problem contracts and SAA assemblies
* ``nlp_solver``     augmented Lagrangian solver for the assembled NLPs
* ``cc_oracle``      exact combinatorial reference solver (small S)
* ``sigvar_alg``     the sigmoidal continuation algorithm
* ``case_studies``   analytic, farm planning, and flare sizing studies
"""

__version__ = "0.1.0"
