from pydantic import BaseModel, ConfigDict, Field


class LatencyModel(BaseModel):
    """Declared per-stage costs in milliseconds for the simulated clock"""

    model_config = ConfigDict(frozen=True)

    traditional_recall: float = Field(120.0, ge=0)
    llm_inference: float = Field(80.0, ge=0)
    index_lookup: float = Field(1.0, ge=0)
    relevance_filter: float = Field(2.0, ge=0)
    fusion: float = Field(3.0, ge=0)

    @property
    def main_path_ms(self) -> float:
        return self.traditional_recall

    @property
    def rewrite_path_ms(self) -> float:
        return self.llm_inference + self.index_lookup + self.relevance_filter

    @property
    def rewrite_in_time(self) -> bool:
        """The rewrite path joins fusion only if it finishes no later than the main path"""
        return self.rewrite_path_ms <= self.main_path_ms

    @property
    def e2e_ms(self) -> float:
        # the main path always gates fusion, whichever way the rewrite path goes
        return self.main_path_ms + self.fusion
