"""Motif-channel social recommendation with cross-channel matching and
hierarchical contrastive training."""

import os as _os

# Honor the thread cap before numpy/BLAS get imported by the submodules.
_cap = _os.environ.get("MOTIFREC_THREADS")
if _cap:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _cap)

__version__ = "0.1.0"

from . import autodiff  # noqa: E402,F401
from .data import (Dataset, InteractionRecord, SocialEdge, build_dataset,  # noqa: E402
                   filter_cold_start, load_dataset, load_ratings, load_trust,
                   split_kfold, summarize)
from .encoder import (encode_channels, init_embeddings, propagate_channel,  # noqa: E402
                      propagate_items)
from .evaluate import MetricsReport, evaluate, predict_scores, topk_metrics  # noqa: E402
from .experiment import cross_validate, run_sweep  # noqa: E402
from .fusion import (AttentionWeights, cross_channel_fuse, export_attention,  # noqa: E402
                     within_channel_fuse)
from .losses import (LossReport, SslConfig, aux1_loss, aux2_loss, bpr_loss,  # noqa: E402
                     cross_channel_contrast, direct_contrast_loss, hmim_channel,
                     infonce_batch, joint_loss, shuffle_negatives)
from .matching import (MatchingWeights, attentive_matching,  # noqa: E402
                       cross_attention_transition, ego_aggregate,
                       matching_representations, multi_view_cosine_match)
from .motifs import (MotifSet, brute_force_motif_count, channel_adjacencies,  # noqa: E402
                     motif_adjacency, motifs_from_dataset, row_normalize,
                     split_social)
from .synthetic import planted_blocks, uniform_recall_baseline  # noqa: E402
from .trainer import (CmhcModel, ModelParams, TrainConfig, TrainResult,  # noqa: E402
                      adam_step, sample_bpr_triples, train)
