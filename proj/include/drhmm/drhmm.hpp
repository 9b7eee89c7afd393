#pragma once

#include "drhmm/core.hpp"
#include "drhmm/kernel_basis.hpp"
#include "drhmm/two_class_dre.hpp"
#include "drhmm/multiclass_posterior.hpp"
#include "drhmm/hmm_inference.hpp"
#include "drhmm/model_learning.hpp"
#include "drhmm/baselines.hpp"
#include "drhmm/synth_data.hpp"
#include "drhmm/evaluation.hpp"
#include "drhmm/io.hpp"
