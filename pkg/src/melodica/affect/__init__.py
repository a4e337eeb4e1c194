"""EDA emotion pipeline: wavelet features, margin classifiers, evaluation."""

from .classify import (
    DegenerateData,
    EmptyTrainingSet,
    Kernel,
    TrainedModel,
    kkt_violation,
    knn_classify,
    knn_train,
    svm_decision,
    svm_predict,
    svm_train,
)
from .data import (
    ConversationAnnotation,
    EdaClassParams,
    EdaRecording,
    MissingAnnotations,
    Segment,
    SubAnnotation,
    read_annotations_csv,
    read_eda_csv,
    segment_conversations,
    synth_eda,
    write_annotations_csv,
    write_eda_csv,
)
from .evaluate import ClassifierSpec, EvalResult, InsufficientClassMembers, evaluate, roc_auc, stratified_folds
from .wavelet import (
    FEATURE_LEN,
    FeatureVector,
    Scalogram,
    SignalTooShort,
    band_limits_hz,
    cwt,
    default_scales,
    extract_features,
)

__all__ = [name for name in dir() if not name.startswith("_")]
