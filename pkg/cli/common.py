# -*- encoding: utf-8 -*-
"""
Shared constants for the command-line surface and the result writers.
"""

class COMMON:

    INPUT_ERR         =  1   # bad input: config, log or arguments
    DIVERGED          =  2   # filter state went non-finite
    VALIDATION_FAIL   =  3   # a numerical check exceeded its tolerance

    CSV_SEP           = ','
    FLOAT_FORMAT      = '%.17g'

    FILE_TRUTH        = 'truth.csv'
    FILE_ESTIMATE     = 'estimate.csv'
    FILE_MEASUREMENTS = 'measurements.csv'
    FILE_METRICS      = 'metrics.json'
    FILE_BATCH        = 'batch.json'

# Recover errors for COMMON class
def errInfo( aErrorCode ):

    if COMMON.INPUT_ERR       == aErrorCode: return 'Input error'
    if COMMON.DIVERGED        == aErrorCode: return 'Filter diverged'
    if COMMON.VALIDATION_FAIL == aErrorCode: return 'Validation failed'

    return str( aErrorCode )
