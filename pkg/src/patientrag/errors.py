"""Exception hierarchy shared across the engine."""


class PatientRagError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PatientRagError):
    pass


class IngestionError(PatientRagError):
    pass


class DimensionMismatchError(PatientRagError):
    pass


class ZeroVectorError(PatientRagError):
    pass


class ProviderError(PatientRagError):
    """Transport-level failure talking to an embedding or chat provider."""


class ProtocolError(PatientRagError):
    """Provider replied, but the reply is structurally invalid or inconsistent."""


class StoreVersionError(PatientRagError):
    def __init__(self, found, supported):
        super().__init__(
            f"unsupported vector store format version {found!r}; supported versions: {supported!r}"
        )
        self.found = found
        self.supported = supported


class StoreParseError(PatientRagError):
    def __init__(self, path, line_number, reason):
        super().__init__(f"{path}: line {line_number}: {reason}")
        self.path = str(path)
        self.line_number = line_number


class AnnotationParseError(PatientRagError):
    """Model reply could not be split into the three required categories."""

    def __init__(self, missing_categories):
        missing = ", ".join(sorted(missing_categories))
        super().__init__(f"annotation reply is missing required category sections: {missing}")
        self.missing_categories = tuple(sorted(missing_categories))


class AnnotationError(PatientRagError):
    """Annotation failed after the corrective re-prompt.

    Carries the raw model reply so operators can audit what came back.
    """

    def __init__(self, message, raw_reply):
        super().__init__(message)
        self.raw_reply = raw_reply


class PatientNotFoundError(PatientRagError):
    def __init__(self, patient_id):
        super().__init__(f"no stored context for patient {patient_id!r}")
        self.patient_id = patient_id


class GenerationError(PatientRagError):
    pass


class MetricError(PatientRagError):
    """A per-record metric could not be computed (e.g. unparseable claim reply)."""


class QuestionGenerationError(PatientRagError):
    pass


class DegenerateRatingsError(PatientRagError):
    """All ratings fell into a single category; chance agreement is 1 and kappa is undefined."""


class EvalRunError(PatientRagError):
    pass


class PipelineStageError(PatientRagError):
    """Wraps a failure with the pipeline stage it occurred in."""

    def __init__(self, stage, cause, trace_id=None):
        super().__init__(f"stage {stage!r}: {cause}")
        self.stage = stage
        self.cause = cause
        self.trace_id = trace_id
