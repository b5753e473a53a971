"""Exception hierarchy shared by all stratkit modules.

ValidationError covers bad user input (CLI exit code 1); ArtifactError covers
broken or missing intermediate files and internal failures (exit code 2).
"""


class StratkitError(Exception):
    pass


class ValidationError(StratkitError):
    pass


class ArtifactError(StratkitError):
    pass


# cohort ingestion
class MalformedRow(ValidationError):
    pass


class UnknownFeature(ValidationError):
    pass


class MissingLabel(ValidationError):
    pass


class MissingStatic(ValidationError):
    pass


class DuplicateCell(ValidationError):
    pass


class NegativeTimestamp(ValidationError):
    pass


class EmptyCohort(ValidationError):
    pass


# synth
class ConfigMismatch(ValidationError):
    pass


# preprocess
class NoObservedValues(ValidationError):
    pass


class FeatureMismatch(ValidationError):
    pass


# taxonomy
class DuplicateCode(ValidationError):
    pass


class OrphanCode(ValidationError):
    pass


class LevelSkip(ValidationError):
    pass


class CycleDetected(ValidationError):
    pass


class LevelAboveCode(ValidationError):
    pass


# embedding
class EmptySeries(ValidationError):
    pass


class NonFiniteActivation(ArtifactError):
    pass


class NonFiniteGradient(ArtifactError):
    pass


class DivergedLoss(ArtifactError):
    pass


# t-SNE
class DegenerateRow(ValidationError):
    pass


class PerplexityTooLarge(ValidationError):
    pass


# k-means
class KGreaterThanN(ValidationError):
    pass


class DimMismatch(ValidationError):
    pass


# metrics
class LengthMismatch(ValidationError):
    pass


class EmptyLabels(ValidationError):
    pass


class MissingClusterLabel(ValidationError):
    pass


class SingleCluster(ValidationError):
    pass


# stratify
class NoTrainMembersAnywhere(ValidationError):
    pass


# hpo
class EmptySpace(ValidationError):
    pass


# report
class NoResults(ValidationError):
    pass
