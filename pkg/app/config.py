# ** Base Modules
import logging

from pydantic_settings import BaseSettings


class Settings(BaseSettings):

    SCD_SEED: int = 0
    SCD_LOG_DIR: str = "logs"
    SCD_LOG_LEVEL: str = "INFO"
    SCD_WORKERS: int = 1

    @property
    def log_level(self) -> int:
        """Resolve the textual level into a logging constant"""
        return getattr(logging, self.SCD_LOG_LEVEL.upper(), logging.INFO)

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"


# Create settings instance
settings = Settings()
