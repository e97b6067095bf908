"""Formula language: terms, formulas, parsing and symbolic calculus"""