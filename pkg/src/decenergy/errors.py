"""Exception hierarchy shared by all decenergy modules.

Every domain failure derives from DecenergyError and carries a stable
``code`` used by the HTTP service and the CLI exit-code mapping.
"""


class DecenergyError(Exception):
    """Base class for all domain errors."""

    code = "error"


# --- profiler / measurement ingestion ---------------------------------------

class MalformedHeader(DecenergyError):
    code = "malformed_header"


class MissingEvent(DecenergyError):
    code = "missing_event"


class NonNumericTotal(DecenergyError):
    code = "non_numeric_total"


class MissingCounter(DecenergyError):
    code = "missing_counter"


class NonNumericValue(DecenergyError):
    code = "non_numeric_value"


class EmptySeries(DecenergyError):
    code = "empty_series"


class NegativeEnergy(DecenergyError):
    code = "negative_energy"


class ZeroMean(DecenergyError):
    code = "zero_mean"


class TooFewSamples(DecenergyError):
    code = "too_few_samples"


# --- dataset handling --------------------------------------------------------

class DuplicateId(DecenergyError):
    code = "duplicate_id"


class SchemaViolation(DecenergyError):
    code = "schema_violation"


class RowParseError(DecenergyError):
    code = "row_parse_error"


# --- regression --------------------------------------------------------------

class DimensionMismatch(DecenergyError):
    code = "dimension_mismatch"


class RankDeficient(DecenergyError):
    code = "rank_deficient"


class NotPositiveDefinite(DecenergyError):
    code = "not_positive_definite"


class OptimizationDiverged(DecenergyError):
    code = "optimization_diverged"


# --- evaluation --------------------------------------------------------------

class LengthMismatch(DecenergyError):
    code = "length_mismatch"


class ZeroMeasurement(DecenergyError):
    code = "zero_measurement"


class ConstantInput(DecenergyError):
    code = "constant_input"


class MissingFeature(DecenergyError):
    code = "missing_feature"


# --- cross-codec prediction --------------------------------------------------

class CodecLeak(DecenergyError):
    code = "codec_leak"


class ConstantPredictions(DecenergyError):
    code = "constant_predictions"


# --- relative hardware energy scoring ----------------------------------------

class IdMismatch(DecenergyError):
    code = "id_mismatch"


class NonPositiveAnchorPrediction(DecenergyError):
    code = "non_positive_anchor_prediction"


class EmptyTrainingSet(DecenergyError):
    code = "empty_training_set"


# --- synthetic corpus generation ----------------------------------------------

class InvalidSpec(DecenergyError):
    code = "invalid_spec"
