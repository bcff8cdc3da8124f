#include "chunkstack/chunker.hpp"

#include <stdexcept>

namespace chunkstack {

ChunkedDocument chunk(const std::vector<int>& token_ids, int content_len, int max_chunks,
                      TruncateSide side) {
  if (content_len < 1) throw std::runtime_error("chunk: content_len must be >= 1");
  if (max_chunks < 1) throw std::runtime_error("chunk: max_chunks must be >= 1");

  const size_t cap = static_cast<size_t>(content_len) * static_cast<size_t>(max_chunks);
  size_t begin = 0, len = token_ids.size();
  if (len > cap) {
    if (side == TruncateSide::Tail) begin = len - cap;
    len = cap;
  }

  ChunkedDocument doc;
  doc.row_len = content_len + 1;
  doc.n_chunks = len == 0 ? 1 : static_cast<int>((len + content_len - 1) / content_len);
  doc.ids.assign(static_cast<size_t>(doc.n_chunks) * doc.row_len, kPadId);
  doc.mask.assign(doc.ids.size(), 0);

  for (int c = 0; c < doc.n_chunks; ++c) {
    size_t base = static_cast<size_t>(c) * doc.row_len;
    doc.ids[base] = kClsId;
    doc.mask[base] = 1;
    for (int j = 0; j < content_len; ++j) {
      size_t src = static_cast<size_t>(c) * content_len + j;
      if (src >= len) break;
      doc.ids[base + 1 + j] = token_ids[begin + src];
      doc.mask[base + 1 + j] = 1;
    }
  }
  return doc;
}

}  // namespace chunkstack
