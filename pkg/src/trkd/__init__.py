"""Target/confusion/background knowledge distillation on a desk-scale toy."""
from .aux_losses import AamConfig, aam_softmax_loss, cos_embed_loss, mse_embed_loss
from .config import RunConfig, load_config
from .data import Dataset, SyntheticDatasetConfig, gen_dataset
from .estimators import AamTeacher, DistilledStudent
from .io import Checkpoint, LogitDump, analyze_partitions, load_checkpoint, read_dump, save_checkpoint, write_dump
from .losses import (DistillWeights, LossValueGrad, bgkd_loss, cfkd_loss, dkd_loss, kd_loss, nckd_loss,
                     tckd_loss, tmkd_loss, trkd_loss)
from .partition import TriagePartition, build_partition, conditional_over_set, three_mass_vector
from .prob import ProbVector, kl_divergence, log_softmax, softmax
from .schedule import TauSchedule, tau_at
from .verification import TrialScoreSet, build_trials, compute_eer, evaluate_eer

__version__ = "0.1.0"
