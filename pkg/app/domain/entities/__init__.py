from .model_spec import HybridArch, ModelSpec, OperatorKind
