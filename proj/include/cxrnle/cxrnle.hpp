#pragma once

#include <cxrnle/config.hpp>
#include <cxrnle/corpus.hpp>
#include <cxrnle/csv.hpp>
#include <cxrnle/keywords.hpp>
#include <cxrnle/labels.hpp>
#include <cxrnle/mention.hpp>
#include <cxrnle/metrics.hpp>
#include <cxrnle/pipeline.hpp>
#include <cxrnle/rules.hpp>
#include <cxrnle/segmenter.hpp>
#include <cxrnle/version.hpp>
