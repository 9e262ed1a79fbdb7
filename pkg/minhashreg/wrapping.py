from abc import ABC, abstractmethod


class FitProcedure(ABC):
    """
    Estimator fitted on a compressed design S, returning a FitResult.
    """

    name: str

    @abstractmethod
    def fit(self, S, y):
        pass
