"""Node configuration management: dispatch, deployment, components, AII."""

from .aii import AiiArtifacts, AiiError, aii_generate
from .cdispd import (Cdispd, affected_components, cdispd_scan, tree_diff_paths,
                     tree_leaf_map)
from .components import (Component, ComponentContext, ComponentError,
                         ComponentRegistry, ExecComponent, FilesComponent,
                         FtRulesComponent, NullServiceManager, ServiceManager,
                         ServicesComponent, SpmComponent, builtin_registry)
from .ncd import (ComponentResult, DependencyCycle, DeploymentLock, Ncd,
                  NcdBusy, NcdError, RunReport, resolve_order)

__all__ = [
    "AiiArtifacts", "AiiError", "Cdispd", "Component", "ComponentContext",
    "ComponentError", "ComponentRegistry", "ComponentResult", "DependencyCycle",
    "DeploymentLock", "ExecComponent", "FilesComponent", "FtRulesComponent",
    "Ncd", "NcdBusy", "NcdError", "NullServiceManager", "RunReport",
    "ServiceManager", "ServicesComponent", "SpmComponent",
    "affected_components", "aii_generate", "builtin_registry", "cdispd_scan",
    "resolve_order", "tree_diff_paths", "tree_leaf_map",
]
