"""Event ontology induction: taxonomy-guided embedding refinement, hierarchical
clustering, node naming and evaluation."""

from .corpus import (
    EmbeddingTable,
    EventRecord,
    EventSet,
    compose_event_embedding,
    load_corpus,
    read_evec,
    read_events,
    write_evec,
    write_events,
)
from .errors import CEOError, ConfigError
from .hcluster import (
    FlatClustering,
    HierarchicalClustering,
    KMeans,
    agglomerative,
    bisecting_kmeans,
    cut_dendrogram,
    kmeans,
    spherical_kmeans,
    ward_linkage,
)
from .metrics import (
    ari,
    bcubed,
    bcubed_f1,
    dasgupta_cost,
    dendrogram_purity,
    dendrogram_purity_sampled,
    nmi,
    ranking_metrics,
    rouge_l,
    sim_dist,
)
from .naming import (
    BackgroundFrequencies,
    name_most_frequent,
    name_remote_lm,
    name_taxonomy_lca,
    name_tfidf,
    name_tree,
)
from .pipeline import load_config, run_pipeline
from .reprlearn import (
    AutoencoderParams,
    TaxonomyAutoencoder,
    TrainConfig,
    batch_loss,
    decode,
    encode,
    encode_all,
    init_autoencoder,
    load_params,
    save_params,
    train,
    triplet_loss,
)
from .salience import align_salience_labels, filter_salient
from .taxonomy import Taxonomy, Triplet, lowest_common_ancestor, mine_triplets, parse_taxonomy, tree_distance
from .tree import Dendrogram, export_ontology, parse_newick, read_merge_list, to_newick, write_merge_list

__version__ = "0.1.0"
