from qmo.harness import main
import sys

sys.exit(main())
