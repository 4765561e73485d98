"""Category fluency sequence models over semantic networks.

Builds similarity or association networks with a frequency-weighted global
node, turns cue products into next-exemplar distributions, generates runs
by greedy/beam/sampled search or random walks, and scores generations
against human reference banks with n-gram overlap and switch-aligned
diagnostics.
"""

from .corpus import (
    CategoryCoding,
    CategoryScheme,
    FluencyRun,
    FrequencyTable,
    Lexicon,
    RunBank,
    TransitionMatrix,
    category_transitions,
    gold_frequencies,
    load_frequencies,
    load_runs,
    load_scheme,
    run_statistics,
    save_runs,
)
from .cues import (
    CueModel,
    CueWeights,
    ExternalDistributions,
    ExternalModel,
    NextDistribution,
    load_external,
    next_distribution,
    reweight_external,
    sequence_loglik,
    switch_mass,
)
from .errors import DataError, DeadEndError, FluencyError, NumericError
from .evaluate import (
    BleuScore,
    ReferenceBank,
    SwitchProfile,
    category_bleu,
    corpus_eval,
    exemplar_bleu,
    ngram_precision,
    switch_profile,
)
from .fit import FitResult, fit_betas
from .network import (
    AssociationNorms,
    EmbeddingTable,
    SemanticNetwork,
    attach_global,
    build_association_network,
    build_similarity_network,
    load_embeddings,
    load_network,
    load_norms,
    network_from_weights,
    save_network,
)
from .search import (
    EmpiricalLength,
    FixedLength,
    GenerationConfig,
    RawWalk,
    censor_repeats,
    generate_beam,
    generate_greedy,
    generate_sampled,
    generate_walk,
    random_walk,
    walk_irt,
)

__version__ = "0.1.0"
