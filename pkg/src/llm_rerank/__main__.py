from llm_rerank.cli import main

raise SystemExit(main())
