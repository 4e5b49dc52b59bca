from .selectors import SelectorResult, greedy_add_select, greedy_remove_select, uniform_alloc
