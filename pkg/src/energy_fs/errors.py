"""Exception hierarchy. Every error carries a stable ``code`` used as the CLI stderr prefix."""


class FeatureStoreError(Exception):
    code = "E-FS"

    def __str__(self):
        return f"{self.code}: {super().__str__()}"


class MissingColumn(FeatureStoreError):
    code = "E-INGEST-MISSING-COLUMN"


class EmptyInput(FeatureStoreError):
    code = "E-EMPTY-INPUT"


class DuplicateEntity(FeatureStoreError):
    code = "E-INGEST-DUPLICATE-ENTITY"


class InvalidLatitude(FeatureStoreError, ValueError):
    code = "E-FEATURE-INVALID-LATITUDE"


class RegistryError(FeatureStoreError):
    code = "E-REGISTRY"


class RegistryParseError(RegistryError):
    code = "E-REGISTRY-PARSE"


class InvalidView(RegistryError):
    code = "E-REGISTRY-INVALID-VIEW"


class DuplicateView(RegistryError):
    code = "E-REGISTRY-DUPLICATE-VIEW"


class UnknownSource(RegistryError):
    code = "E-REGISTRY-UNKNOWN-SOURCE"


class UnknownFeature(RegistryError):
    code = "E-REGISTRY-UNKNOWN-FEATURE"


class EmptyRange(FeatureStoreError):
    code = "E-QUERY-EMPTY-RANGE"


class StoreMissing(FeatureStoreError):
    code = "E-STORE-MISSING"


class TooFewRows(FeatureStoreError):
    code = "E-GBRT-TOO-FEW-ROWS"


class WidthMismatch(FeatureStoreError):
    code = "E-GBRT-WIDTH-MISMATCH"


class ModelFormatError(FeatureStoreError):
    code = "E-GBRT-MODEL-FORMAT"


class NoValidPairs(FeatureStoreError):
    code = "E-EVAL-NO-VALID-PAIRS"


class LengthMismatch(FeatureStoreError):
    code = "E-EVAL-LENGTH-MISMATCH"
