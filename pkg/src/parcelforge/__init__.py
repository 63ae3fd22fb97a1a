"""Data-driven fMRI parcellation from ICA-selected seeds, PLS latents and spectral clustering."""

from .core_data import (BoldDataset, DesignMatrix, VolumeGrid, center_rows, mask_and_flatten,
                        unit_normalize_rows)
from .evaluate import (StatMap, adjusted_rand, compare_methods, glm_tvalues, intra_parcel_variance,
                       pls_tmap, pls_tvalue)
from .ica import ICDecomposition, fastica, import_ics
from .ica_match import (ICClustering, ICSimilarity, ic_correlation, ics_for_subject, normalized_correlation,
                        select_task_clusters, similarity_matrix, ward_cluster)
from .nifti import load_nifti
from .parcellate import (Parcellation, build_graph, cmeans, geodesics, local_distance, parcellate_pipeline,
                         spatial_baseline, spectral_embed)
from .pls_core import (FeatureField, PCAModel, PLSModel, TruncationPolicy, build_seed_matrix,
                       covariance_features, pca_decompose, pls_fit, truncate, whiten_scores)
from .seeds import SeedSet, select_seeds
from .synthetic import SyntheticCohort, SyntheticCohortSpec, generate_synthetic_cohort

__version__ = "0.1.0"
