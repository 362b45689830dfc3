class SdsaError(Exception):
    pass


class ShapeError(SdsaError, ValueError):
    pass


class DomainError(SdsaError, ValueError):
    pass


class NumericError(SdsaError, ArithmeticError):
    pass


class ConfigError(SdsaError, ValueError):
    pass


class DataError(SdsaError, ValueError):
    pass


class ClassificationError(SdsaError, ValueError):
    def __init__(self, lat, lon, sample_id=None):
        self.lat, self.lon, self.sample_id = lat, lon, sample_id
        where = f" (sample {sample_id})" if sample_id is not None else ""
        super().__init__(f"point ({lat}, {lon}){where} lies outside every configured region")


class UsageError(SdsaError, RuntimeError):
    pass


class FormatError(SdsaError, ValueError):
    pass
