# Rewrite Agent - demand-aware query rewriting pipeline
