from .records import (MANIFEST_COLUMNS, AnnotationRecord, ExpressionClass, MergeResult, Source, class_histogram,
                      load_manifest, merge_sources, save_manifest)
from .images import Image, crop, crop_and_resize, read_image, write_image
from .augment import AugmentKind, AugmentPolicy, augment, keyed_rng, materialize_augmentations
from .sampler import BalancedSampler, UniformSampler, make_sampler
from .synth import SynthResult, SynthSpec, stratified_split, synth_generate
from .fixtures import CORPUS_HISTOGRAMS, column_totals, fixture_manifest
from .loader import DataConfig, ImageSet, manifest_root, open_image_set, targets_for, to_model_input
