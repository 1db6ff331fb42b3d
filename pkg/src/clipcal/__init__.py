"""clipcal: post-hoc neural-network calibration by feature clipping.

Subpackages/modules:

* ``datastore``   -- dataset model, binary interchange format, splits
* ``metrics``     -- ECE variants, NLL, Brier, accuracy, reliability bins
* ``calibrators`` -- feature/logit clipping, TS/ETS/CTS fits, pipelines
* ``theory``      -- clipped-feature entropy analysis and checks
* ``analysis``    -- HCE/LCE group diagnostics
* ``cli``         -- the ``clipcal`` command
"""

__version__ = "0.1.0"
