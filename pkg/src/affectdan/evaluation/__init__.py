from .predictions import PredictionRecord, index_predictions, read_predictions, write_predictions
from .scoring import MODES, ScoreReport, config_hash, evaluate, video_id
from .ensemble import EnsembleConfig, EnsembleSpec, normalize_weights, soft_vote, train_ensemble
from .predict import PredictSummary, predict, predict_image_set
from .report import render_report
