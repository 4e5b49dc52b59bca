from app.adapters.repositories.artifact_repository import ArtifactRepository
from app.adapters.repositories.checkpoint_repository import CheckpointRepository
from app.api_services.pipeline_use_case_impl import PipelineUseCaseImpl
from app.infrastructure.dto.config_schema import RunConfig


def checkpoint_repository(cfg: RunConfig) -> CheckpointRepository:
    return CheckpointRepository(root_dir=cfg.paths.out_dir)


def artifact_repository(cfg: RunConfig) -> ArtifactRepository:
    return ArtifactRepository(root_dir=cfg.paths.out_dir)


def pipeline_use_case(cfg: RunConfig) -> PipelineUseCaseImpl:
    pipeline_use_case = PipelineUseCaseImpl(
        checkpoint_repository=checkpoint_repository(cfg),
        artifact_repository=artifact_repository(cfg),
    )
    return pipeline_use_case
