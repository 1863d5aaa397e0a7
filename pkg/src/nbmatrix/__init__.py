"""Nonparametric Bayesian priors for random count matrices.

Three priors over count matrices with an unbounded number of columns
(gamma-Poisson, gamma-negative-binomial, beta-negative-binomial), with exact
PMFs, column-wise and row-wise simulation, closed-form Gibbs inference,
predictive distributions for new rows carrying unseen features, and a naive
Bayes classifier for count vectors built on top.
"""

__version__ = "0.1.0"

from .classify import (
    ClassifierBundle,
    EvalReport,
    MultinomialLaplace,
    UnscorableRowError,
    classify,
    evaluate,
    multinomial_laplace_loglik,
)
from .corpus import (
    Corpus,
    CorpusFormatError,
    Document,
    corpus_matrix,
    load_corpus,
    ppc_report,
    save_corpus,
    split_corpus,
)
from .distributions import (
    BetaNegBinomial,
    Digamma,
    DirichletMultinomial,
    GammaNegBinomial,
    Logarithmic,
    LogLogarithmic,
    NegativeBinomial,
    Poisson,
    SumLogarithmic,
    crt_sample,
    crt_sample_many,
    logbeta_sample,
)
from .geweke import GewekeReport, geweke_check
from .gibbs import (
    CategoryModel,
    ChainConfig,
    Hyper,
    LatentState,
    PosteriorSample,
    gibbs_sweep,
    initial_state,
    load_model,
    mh_update_c,
    run_chain,
    save_model,
)
from .matrix import AugmentedMatrix, CountMatrix, canonical_form, load_matrix, save_matrix
from .predictive import AlignedRow, RowScorer, align, predict_row_loglik
from .processes import (
    BnbpParams,
    GnbpParams,
    MatrixDraw,
    NbpParams,
    RowDraw,
    column_count_rate,
    log_pmf,
    new_column_rate,
    row_increment_log_pmf,
    sample_next_row,
    simulate_columnwise,
    simulate_sequential,
)
