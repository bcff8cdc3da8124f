#pragma once

#include <vector>

#include "chunkstack/tokenizer.hpp"

namespace chunkstack {

// Token ids split into equal-length rows of content_len + 1, each row led by
// [CLS]. mask is 1 on a prefix of each row, 0 (and PAD) afterward.
struct ChunkedDocument {
  int n_chunks = 0;
  int row_len = 0;  // content_len + 1
  std::vector<int> ids;   // n_chunks x row_len, row-major
  std::vector<int> mask;  // same shape, values 0/1

  const int* row_ids(int c) const { return ids.data() + c * row_len; }
  const int* row_mask(int c) const { return mask.data() + c * row_len; }
};

enum class TruncateSide { Head, Tail };  // Head keeps the front of the document

// content_len content tokens per chunk, [CLS] prepended on top (row length
// content_len + 1). The final partial chunk is PAD/mask-0 padded; documents
// longer than max_chunks * content_len are truncated. Empty input yields one
// all-PAD chunk behind its [CLS].
ChunkedDocument chunk(const std::vector<int>& token_ids, int content_len = 202,
                      int max_chunks = 32, TruncateSide side = TruncateSide::Head);

}  // namespace chunkstack
