from .config import ClassCenters, LossConfig, va_bins
from .losses import (LossBreakdown, affinity_labels, affinity_loss, ccc_loss, combined_loss, focal_loss,
                     partition_loss)
from .metrics import ccc, confusion_matrix, macro_f1, mean_ccc, pearson, per_class_f1
