"""Predict which MOOC discussion-forum threads need staff intervention.

The pipeline: model forum corpora (threads of timestamped, role-attributed
posts and comments), label threads by staff participation, truncate staff
content away, extract L2-normalized tf×itf unigrams plus forum-type bits and
max-min-normalized metadata features, and train class-weighted L1-regularized
logistic regression evaluated with per-course and cross-course validation.
"""

from .corpus import (AuthorRole, Comment, Corpus, CorpusFormatError,
                     CorpusStats, Course, ForumType, Post, Thread,
                     compute_stats, label_thread, load_corpus,
                     oversample_to_density, rewind, save_corpus,
                     truncate_at_first_intervention)
from .evaluate import (AnnotationSet, EvalConfig, ExperimentReport, Metrics,
                       all_positive_baseline, cohen_kappa, compute_metrics,
                       cross_validate_course, cv_all_courses, feature_study,
                       loo_course_cv, pairwise_kappa, pearson, prepare_corpus,
                       split_course, stratified_kfold, stratified_split)
from .features import (FEATURE_GROUPS, FeatureVector, MetaFeatures,
                       MinMaxScaler, Vocabulary, apply_minmax, assemble,
                       build_vocabulary, extract_meta, fit_minmax,
                       parse_feature_flags, tf_itf_vector)
from .model import (ModelArtifact, ModelParams, Prediction, TrainConfig,
                    objective, predict, predict_labels, predict_proba,
                    smooth_gradient, soft_threshold, train, tune_class_weight)
from .syngen import CorpusSpec, CourseSpec, SignalSpec, StructureSpec
from .syngen import default_d14_like_spec, generate
from .textprep import (CanonicalText, TextPrepConfig, canonicalize,
                       count_affirmations, count_course_refs,
                       default_textprep_config, load_textprep_config,
                       split_sentences, tokenize)

__version__ = "0.1.0"
