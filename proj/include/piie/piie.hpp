#pragma once

#include "piie/autodiff.hpp"
#include "piie/checkpoint.hpp"
#include "piie/cli.hpp"
#include "piie/corpus.hpp"
#include "piie/crf.hpp"
#include "piie/embedder.hpp"
#include "piie/errors.hpp"
#include "piie/experiments.hpp"
#include "piie/gcn.hpp"
#include "piie/grad_check.hpp"
#include "piie/layer_checks.hpp"
#include "piie/log.hpp"
#include "piie/lstm.hpp"
#include "piie/metrics.hpp"
#include "piie/model.hpp"
#include "piie/optimizer.hpp"
#include "piie/parameter.hpp"
#include "piie/report.hpp"
#include "piie/synthetic.hpp"
#include "piie/tags.hpp"
#include "piie/tensor.hpp"
#include "piie/trainer.hpp"
#include "piie/transformer.hpp"
#include "piie/vocab.hpp"
