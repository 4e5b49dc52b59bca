from .relaxation import (
    anneal_schedule,
    cost_loss,
    discretize,
    realized_budget,
    routing_diagnostics,
    routing_probs,
    search_loss,
    searchable_allocation,
)
