"""Run-time selection of fill-reducing orderings for a sparse LU solver."""

from .sparse import (MatrixFeatures, MatrixMarketError, SparseMatrix, at_plus_a_pattern,
                     ata_pattern, density, extract_features, parse_matrix_market,
                     read_matrix_market, write_matrix_market)
from .ordering import (OrderingParam, approx_min_degree_columns, min_degree_order,
                       natural_order, order)
from .lu import FactorStats, LuFactors, SingularMatrixError, lu_factorize, solve, symbolic_fill
from .fuzzy import (Decision, MembershipFunction, RuleBase, decide, default_rule_base,
                    grade_all, load_rule_base)
from .bus import DecisionServer, request_decision, serve, tuned_solve
from .estimators import FuzzyOrderingSelector, MatrixFeaturizer, TunedLUSolver

__version__ = "0.1.0"
